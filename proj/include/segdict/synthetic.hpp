#pragma once

// Planted-dictionary beat generator. Each class owns a stacked dictionary
// whose atoms share a class prototype; a beat is one stacked atom scaled by a
// positive amplitude plus white Gaussian noise.

#include <segdict/beat_model.hpp>
#include <segdict/error.hpp>
#include <segdict/ingest.hpp>
#include <segdict/random.hpp>

#include <cmath>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace segdict {

struct SyntheticConfig {
    int classes = 4;
    int per_class = 125;
    int k = 16;
    int segments = 4;
    Index gamma = 200;
    double noise = 0.02;
    double perturbation = 1.0;  // weight of the atom-specific shape relative to the prototype
    std::uint64_t seed = 1;
    // Optional named classes with their own beat counts; replaces classes/per_class.
    std::vector<std::pair<std::string, int>> class_counts;

    int class_count() const { return class_counts.empty() ? classes : static_cast<int>(class_counts.size()); }
    int beats_in(int c) const { return class_counts.empty() ? per_class : class_counts[static_cast<std::size_t>(c)].second; }
    std::string label(int c) const
    {
        return class_counts.empty() ? std::string(1, static_cast<char>('A' + c)) : class_counts[static_cast<std::size_t>(c)].first;
    }

    void validate() const
    {
        for (const auto& [name, n] : class_counts)
            if (name.empty() || name.find_first_of(",: \t\r\n") != std::string::npos || n < 1)
                throw Error(ErrorKind::invalid_argument, "bad class count entry '" + name + "'");
        for (std::size_t a = 0; a < class_counts.size(); ++a)
            for (std::size_t b = a + 1; b < class_counts.size(); ++b)
                if (class_counts[a].first == class_counts[b].first)
                    throw Error(ErrorKind::invalid_argument, "class '" + class_counts[a].first + "' listed twice");
        if (!class_counts.empty()) {
            if (class_counts.size() < 2)
                throw Error(ErrorKind::invalid_argument, "need at least two classes");
        } else if (classes < 2 || classes > 26)
            throw Error(ErrorKind::invalid_argument, "classes must be in [2, 26]");
        if (per_class < 1 || k < 1)
            throw Error(ErrorKind::invalid_argument, "per_class and k must be positive");
        if (segments < 1 || gamma % segments != 0 || gamma / segments < 4)
            throw Error(ErrorKind::invalid_argument, "gamma must split into segments of at least 4 samples");
        if (!(noise >= 0.0) || !(perturbation >= 0.0))
            throw Error(ErrorKind::invalid_argument, "noise and perturbation must be non-negative");
    }
};

struct SyntheticDataset {
    std::vector<RawBeatRecord> records;
    std::vector<Matrix> planted;    // per class, gamma x k stacked dictionary
    std::vector<int> atom_of_beat;  // 0-based atom index per record
};

namespace detail {

/// Sum of three Gaussian bumps with random centre, width and signed height.
inline Vector random_bumps(Index len, Rng& rng)
{
    Vector v = Vector::Zero(len);
    for (int b = 0; b < 3; ++b) {
        const double centre = uniform_unit(rng) * static_cast<double>(len - 1);
        const double width = (0.04 + 0.16 * uniform_unit(rng)) * static_cast<double>(len);
        const double height = standard_normal(rng);
        for (Index t = 0; t < len; ++t) {
            const double u = (static_cast<double>(t) - centre) / width;
            v(t) += height * std::exp(-0.5 * u * u);
        }
    }
    return v;
}

}  // namespace detail

/// Beats are emitted class by class; default labels are "A", "B", ...
inline SyntheticDataset generate_synthetic(const SyntheticConfig& cfg)
{
    cfg.validate();
    const Index d = cfg.gamma / cfg.segments;
    SyntheticDataset out;
    Rng dict_rng(derive_seed(cfg.seed, 1));
    for (int c = 0; c < cfg.class_count(); ++c) {
        Matrix b(cfg.gamma, cfg.k);
        for (int j = 0; j < cfg.segments; ++j) {
            const Vector proto = detail::random_bumps(d, dict_rng);
            for (int a = 0; a < cfg.k; ++a) {
                Vector atom = proto + cfg.perturbation * detail::random_bumps(d, dict_rng);
                const double n = atom.norm();
                if (!(n > 0.0))
                    throw Error(ErrorKind::degenerate_beat, "planted atom vanished");
                b.block(j * d, a, d, 1) = atom / n;
            }
        }
        out.planted.push_back(std::move(b));
    }

    Rng beat_rng(derive_seed(cfg.seed, 2));
    for (int c = 0; c < cfg.class_count(); ++c)
        for (int i = 0; i < cfg.beats_in(c); ++i) {
            const int atom = static_cast<int>(uniform_index(beat_rng, static_cast<std::uint64_t>(cfg.k)));
            const double amplitude = 0.5 + uniform_unit(beat_rng);
            RawBeatRecord rec;
            rec.label = cfg.label(c);
            rec.channel_count = 1;
            rec.samples.resize(static_cast<std::size_t>(cfg.gamma));
            for (Index t = 0; t < cfg.gamma; ++t)
                rec.samples[static_cast<std::size_t>(t)] =
                    amplitude * out.planted[static_cast<std::size_t>(c)](t, atom) + cfg.noise * standard_normal(beat_rng);
            out.records.push_back(std::move(rec));
            out.atom_of_beat.push_back(atom);
        }
    return out;
}

/// Writes records in the dataset CSV layout read by parse_dataset.
inline void write_dataset_csv(std::ostream& out, const std::vector<RawBeatRecord>& records)
{
    if (records.empty())
        throw Error(ErrorKind::empty_dataset, "no records to write");
    const int channels = records.front().channel_count;
    if (channels != 1)
        out << "#channels=" << channels << '\n';
    char buf[40];
    for (const auto& r : records) {
        if (r.label.find_first_of(",\r\n") != std::string::npos)
            throw Error(ErrorKind::invalid_argument, "label '" + r.label + "' cannot be written to CSV");
        out << r.label;
        for (const double v : r.samples) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace segdict
