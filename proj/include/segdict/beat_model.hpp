#pragma once

#include <segdict/error.hpp>

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace segdict {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Preprocessed beats stored one per column, with one class label per beat.
class BeatMatrix {
public:
    BeatMatrix() = default;

    BeatMatrix(Matrix samples, std::vector<std::string> labels, int channels = 1)
        : samples_(std::move(samples)), labels_(std::move(labels)), channels_(channels)
    {
        if (static_cast<Index>(labels_.size()) != samples_.cols())
            throw Error(ErrorKind::length_mismatch,
                        "beat matrix has " + std::to_string(samples_.cols()) + " columns but " +
                            std::to_string(labels_.size()) + " labels");
        if (channels_ < 1 || samples_.rows() % channels_ != 0)
            throw Error(ErrorKind::shape_mismatch, "beat length not divisible by channel count");
        if (!samples_.allFinite())
            throw Error(ErrorKind::invalid_argument, "beat matrix contains non-finite samples");
    }

    const Matrix& samples() const noexcept { return samples_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    Index gamma() const noexcept { return samples_.rows(); }
    Index count() const noexcept { return samples_.cols(); }
    int channels() const noexcept { return channels_; }

    /// Beats restricted to the given column indices, labels carried along.
    BeatMatrix subset(const std::vector<Index>& columns) const
    {
        Matrix out(gamma(), static_cast<Index>(columns.size()));
        std::vector<std::string> labels;
        labels.reserve(columns.size());
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i] < 0 || columns[i] >= count())
                throw Error(ErrorKind::index_out_of_range, "beat index " + std::to_string(columns[i]));
            out.col(static_cast<Index>(i)) = samples_.col(columns[i]);
            labels.push_back(labels_[static_cast<std::size_t>(columns[i])]);
        }
        return BeatMatrix(std::move(out), std::move(labels), channels_);
    }

private:
    Matrix samples_;
    std::vector<std::string> labels_;
    int channels_ = 1;
};

/// Row ranges [start, end) that cut every beat into J pieces. Segment numbers
/// are 1-based throughout the library.
class SegmentSpec {
public:
    struct Range {
        Index start;
        Index end;
        Index length() const noexcept { return end - start; }
        bool operator==(const Range&) const = default;
    };

    /// J contiguous, non-overlapping, equal-length windows covering [0, gamma).
    static SegmentSpec equal(Index gamma, int j_count)
    {
        if (j_count < 1 || gamma < 1)
            throw Error(ErrorKind::invalid_argument, "segment count and beat length must be positive");
        if (gamma % j_count != 0)
            throw Error(ErrorKind::shape_mismatch, "beat length " + std::to_string(gamma) +
                                                       " is not divisible into " + std::to_string(j_count) +
                                                       " equal segments");
        std::vector<Range> ranges;
        const Index d = gamma / j_count;
        for (int j = 0; j < j_count; ++j)
            ranges.push_back({j * d, (j + 1) * d});
        return SegmentSpec(gamma, std::move(ranges));
    }

    /// Arbitrary windows (may overlap or leave gaps) for experimentation.
    static SegmentSpec custom(Index gamma, std::vector<Range> ranges)
    {
        if (ranges.empty())
            throw Error(ErrorKind::invalid_argument, "at least one segment is required");
        for (const auto& r : ranges)
            if (r.start < 0 || r.end > gamma || r.start >= r.end)
                throw Error(ErrorKind::invalid_argument, "segment range outside [0, gamma)");
        return SegmentSpec(gamma, std::move(ranges));
    }

    int j_count() const noexcept { return static_cast<int>(ranges_.size()); }
    Index gamma() const noexcept { return gamma_; }
    const std::vector<Range>& boundaries() const noexcept { return ranges_; }

    /// Common segment length d, or 0 when segments differ in length.
    Index seg_len() const noexcept
    {
        const Index d = ranges_.front().length();
        for (const auto& r : ranges_)
            if (r.length() != d)
                return 0;
        return d;
    }

    const Range& range(int j) const
    {
        if (j < 1 || j > j_count())
            throw Error(ErrorKind::index_out_of_range,
                        "segment " + std::to_string(j) + " not in [1, " + std::to_string(j_count()) + "]");
        return ranges_[static_cast<std::size_t>(j - 1)];
    }

    /// True when the windows tile [0, gamma) exactly, in order.
    bool is_partition() const noexcept
    {
        Index next = 0;
        for (const auto& r : ranges_) {
            if (r.start != next)
                return false;
            next = r.end;
        }
        return next == gamma_;
    }

    /// Total rows of a beat re-assembled from its segments.
    Index stacked_rows() const noexcept
    {
        Index rows = 0;
        for (const auto& r : ranges_)
            rows += r.length();
        return rows;
    }

private:
    SegmentSpec(Index gamma, std::vector<Range> ranges) : gamma_(gamma), ranges_(std::move(ranges)) {}

    Index gamma_;
    std::vector<Range> ranges_;
};

struct SegmentDictionary {
    Matrix atoms;  // d x k, one atom per column
    int segment_index = 1;

    Index k() const noexcept { return atoms.cols(); }
    Index d() const noexcept { return atoms.rows(); }
};

struct StackedDictionary {
    Matrix atoms;  // sum of segment lengths x k
};

struct SparseCodeMatrix {
    Matrix codes;  // k x beats
    double lambda = 0.0;

    double mean_nonzeros() const
    {
        if (codes.cols() == 0)
            return 0.0;
        return static_cast<double>((codes.array() != 0.0).count()) / static_cast<double>(codes.cols());
    }
};

/// Rows of segment j (1-based) for every beat.
inline Matrix segment_view(const Matrix& beats, const SegmentSpec& spec, int j)
{
    if (beats.rows() != spec.gamma())
        throw Error(ErrorKind::shape_mismatch, "segment spec is for length " + std::to_string(spec.gamma()) +
                                                   ", beats have length " + std::to_string(beats.rows()));
    const auto& r = spec.range(j);
    return beats.middleRows(r.start, r.length());
}

inline Matrix segment_view(const BeatMatrix& beats, const SegmentSpec& spec, int j)
{
    return segment_view(beats.samples(), spec, j);
}

/// Concatenates the segments of every beat; identical to the input when the
/// spec is a partition.
inline Matrix stack_segments(const Matrix& beats, const SegmentSpec& spec)
{
    if (spec.is_partition() && beats.rows() == spec.gamma())
        return beats;
    Matrix out(spec.stacked_rows(), beats.cols());
    Index row = 0;
    for (int j = 1; j <= spec.j_count(); ++j) {
        Matrix part = segment_view(beats, spec, j);
        out.middleRows(row, part.rows()) = part;
        row += part.rows();
    }
    return out;
}

/// Column kappa of the result is atom kappa of D_1, ..., D_J stacked vertically.
inline StackedDictionary stack_dictionaries(const std::vector<SegmentDictionary>& dicts)
{
    if (dicts.empty())
        throw Error(ErrorKind::missing_segment, "no dictionaries to stack");
    const Index k = dicts.front().k();
    const int j_count = static_cast<int>(dicts.size());
    std::vector<const SegmentDictionary*> ordered(dicts.size(), nullptr);
    for (const auto& d : dicts) {
        if (d.k() != k)
            throw Error(ErrorKind::mismatched_k, "segment " + std::to_string(d.segment_index) + " has " +
                                                     std::to_string(d.k()) + " atoms, expected " +
                                                     std::to_string(k));
        if (d.segment_index < 1 || d.segment_index > j_count)
            throw Error(ErrorKind::missing_segment,
                        "segment index " + std::to_string(d.segment_index) + " outside [1, J]");
        auto& slot = ordered[static_cast<std::size_t>(d.segment_index - 1)];
        if (slot != nullptr)
            throw Error(ErrorKind::duplicate_segment, "segment index " + std::to_string(d.segment_index));
        slot = &d;
    }

    Index rows = 0;
    for (const auto* d : ordered)
        rows += d->d();
    StackedDictionary out{Matrix(rows, k)};
    Index row = 0;
    for (const auto* d : ordered) {
        out.atoms.middleRows(row, d->d()) = d->atoms;
        row += d->d();
    }
    return out;
}

}  // namespace segdict
