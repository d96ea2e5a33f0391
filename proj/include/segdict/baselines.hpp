#pragma once

// Comparison feature extractors: per-segment VQ codebooks trained by Lloyd's
// k-means (random or k-means++ seeding) and DFT magnitude features.

#include <segdict/beat_model.hpp>
#include <segdict/error.hpp>
#include <segdict/parallel.hpp>
#include <segdict/random.hpp>

#include <Eigen/Dense>
#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstdint>
#include <limits>
#include <mutex>
#include <string>
#include <vector>

namespace segdict {

enum class Seeding { random, kmeanspp };

struct VqCodebook {
    Matrix centers;  // d x k
    int segment_index = 1;

    Index k() const noexcept { return centers.cols(); }
};

/// Codes are 1-based center indices, one row per segment, one column per beat.
struct VqCodeMatrix {
    Eigen::MatrixXi codes;
};

struct KMeansResult {
    VqCodebook codebook;
    std::vector<double> distortion;  // after each assignment step
    int iterations = 0;
    bool converged = false;
};

namespace detail {

/// Nearest center by squared distance; ties go to the lowest index.
inline Index nearest_center(const Matrix& centers, const Eigen::Ref<const Vector>& point, double* dist = nullptr)
{
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < centers.cols(); ++c) {
        const double d = (centers.col(c) - point).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (dist)
        *dist = best_d;
    return best;
}

inline Matrix seed_centers(const Matrix& points, int k, Seeding seeding, Rng& rng)
{
    const Index n = points.cols();
    Matrix centers(points.rows(), k);
    if (seeding == Seeding::random) {
        const auto picks = sample_without_replacement(n, k, rng);
        for (int c = 0; c < k; ++c)
            centers.col(c) = points.col(picks[static_cast<std::size_t>(c)]);
        return centers;
    }

    centers.col(0) = points.col(static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
    Vector nearest(n);
    for (Index i = 0; i < n; ++i)
        nearest(i) = (points.col(i) - centers.col(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = nearest.sum();
        Index pick = 0;
        if (total > 0.0) {
            const double target = uniform_unit(rng) * total;
            double acc = 0.0;
            pick = n - 1;
            for (Index i = 0; i < n; ++i) {
                acc += nearest(i);
                if (acc > target && nearest(i) > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
        }
        centers.col(c) = points.col(pick);
        for (Index i = 0; i < n; ++i)
            nearest(i) = std::min(nearest(i), (points.col(i) - centers.col(c)).squaredNorm());
    }
    return centers;
}

}  // namespace detail

/// Lloyd's algorithm on the columns of `segments`. Runs until assignments stop
/// changing or `max_iter` assignment steps. An empty cluster is re-seeded with
/// the point farthest from its own center.
inline KMeansResult kmeans_train(const Matrix& segments, int k, Seeding seeding, std::uint64_t seed, int max_iter = 100,
                                 int segment_index = 1)
{
    const Index n = segments.cols();
    if (k < 1 || n < k)
        throw Error(ErrorKind::insufficient_points,
                    "k-means needs at least " + std::to_string(k) + " points, have " + std::to_string(n));
    if (max_iter < 1)
        throw Error(ErrorKind::invalid_argument, "max_iter must be at least 1");

    Rng rng(seed);
    KMeansResult res;
    res.codebook.segment_index = segment_index;
    Matrix centers = detail::seed_centers(segments, k, seeding, rng);

    std::vector<Index> assign(static_cast<std::size_t>(n), -1);
    Vector dist(n);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (Index i = 0; i < n; ++i) {
            const Index c = detail::nearest_center(centers, segments.col(i), &dist(i));
            if (c != assign[static_cast<std::size_t>(i)]) {
                assign[static_cast<std::size_t>(i)] = c;
                changed = true;
            }
        }
        res.distortion.push_back(dist.sum());
        res.iterations = it + 1;
        if (!changed) {
            res.converged = true;
            break;
        }

        Matrix sums = Matrix::Zero(segments.rows(), k);
        std::vector<Index> counts(static_cast<std::size_t>(k), 0);
        for (Index i = 0; i < n; ++i) {
            sums.col(assign[static_cast<std::size_t>(i)]) += segments.col(i);
            ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
        }
        std::vector<bool> taken(static_cast<std::size_t>(n), false);
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centers.col(c) = sums.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            Index far = -1;
            for (Index i = 0; i < n; ++i)
                if (!taken[static_cast<std::size_t>(i)] && (far < 0 || dist(i) > dist(far)))
                    far = i;
            if (far < 0 || dist(far) == 0.0)
                throw Error(ErrorKind::insufficient_points, "fewer distinct points than clusters");
            taken[static_cast<std::size_t>(far)] = true;
            dist(far) = 0.0;
            centers.col(c) = segments.col(far);
        }
    }

    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b)
            if (centers.col(a) == centers.col(b))
                throw Error(ErrorKind::insufficient_points, "clusters collapsed onto identical centers");
    res.codebook.centers = std::move(centers);
    return res;
}

/// Nearest-center index (1-based) for every segment of every beat.
inline VqCodeMatrix vq_encode(const Matrix& beats, const SegmentSpec& spec, const std::vector<VqCodebook>& codebooks)
{
    if (static_cast<int>(codebooks.size()) != spec.j_count())
        throw Error(ErrorKind::missing_segment, "one codebook per segment required");
    VqCodeMatrix out{Eigen::MatrixXi(spec.j_count(), beats.cols())};
    for (const auto& cb : codebooks) {
        if (cb.segment_index < 1 || cb.segment_index > spec.j_count())
            throw Error(ErrorKind::missing_segment, "codebook segment index out of range");
        const Matrix view = segment_view(beats, spec, cb.segment_index);
        if (view.rows() != cb.centers.rows())
            throw Error(ErrorKind::shape_mismatch, "codebook dimension does not match segment length");
        parallel_for(view.cols(), [&](std::ptrdiff_t i) {
            const auto col = static_cast<Index>(i);
            out.codes(cb.segment_index - 1, col) =
                static_cast<int>(detail::nearest_center(cb.centers, view.col(col)) + 1);
        });
    }
    return out;
}

/// J*k binary features: block j holds the one-hot encoding of segment j's code.
inline Matrix one_hot(const VqCodeMatrix& codes, int k)
{
    const Index segments = codes.codes.rows();
    Matrix out = Matrix::Zero(segments * k, codes.codes.cols());
    for (Index c = 0; c < codes.codes.cols(); ++c)
        for (Index j = 0; j < segments; ++j) {
            const int code = codes.codes(j, c);
            if (code < 1 || code > k)
                throw Error(ErrorKind::index_out_of_range, "VQ code outside codebook range");
            out(j * k + code - 1, c) = 1.0;
        }
    return out;
}

namespace detail {

inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}

}  // namespace detail

/// Magnitudes of DFT bins 0..n_coeffs-1 of every channel, channels concatenated.
inline Matrix fft_features(const BeatMatrix& beats, Index n_coeffs)
{
    const int channels = beats.channels();
    const Index len = beats.gamma() / channels;
    if (n_coeffs < 1 || n_coeffs > len)
        throw Error(ErrorKind::invalid_argument, "coefficient count must be in [1, samples per channel]");

    const Index bins = len / 2 + 1;
    std::vector<double> in(static_cast<std::size_t>(len));
    std::vector<std::complex<double>> out(static_cast<std::size_t>(bins));
    fftw_plan plan;
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(len), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                    FFTW_ESTIMATE);
    }

    Matrix features(n_coeffs * channels, beats.count());
    for (Index b = 0; b < beats.count(); ++b)
        for (int c = 0; c < channels; ++c) {
            for (Index t = 0; t < len; ++t)
                in[static_cast<std::size_t>(t)] = beats.samples()(c * len + t, b);
            fftw_execute(plan);
            for (Index f = 0; f < n_coeffs; ++f) {
                // Real input: bins above N/2 mirror their conjugates.
                const Index src = f < bins ? f : len - f;
                features(c * n_coeffs + f, b) = std::abs(out[static_cast<std::size_t>(src)]);
            }
        }

    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    return features;
}

}  // namespace segdict
