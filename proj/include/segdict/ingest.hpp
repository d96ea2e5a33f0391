#pragma once

#include <segdict/beat_model.hpp>
#include <segdict/error.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace segdict {

/// One beat as read from disk, before resampling. Multi-channel samples are
/// stored channel after channel with equal per-channel length.
struct RawBeatRecord {
    std::string label;
    std::vector<double> samples;
    int channel_count = 1;

    std::size_t per_channel() const noexcept { return samples.size() / static_cast<std::size_t>(channel_count); }
};

enum class DatasetFormat { csv };

inline constexpr std::size_t kMinRawSamplesPerChannel = 8;

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline bool parse_double(std::string_view s, double& out)
{
    s = trim(s);
    if (s.empty())
        return false;
    if (s.front() == '+')
        s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

}  // namespace detail

/// Parses beat rows from a stream. Layout: optional `#channels=N` directive on
/// the first line, optional `label,s1,s2,...` header, then one beat per row.
inline std::vector<RawBeatRecord> parse_dataset(std::istream& in)
{
    std::vector<RawBeatRecord> records;
    std::string line;
    int channels = 1;
    std::size_t row = 0;
    bool header_allowed = true;

    while (std::getline(in, line)) {
        ++row;
        std::string_view view = detail::trim(line);
        if (view.empty())
            continue;
        if (view.front() == '#') {
            constexpr std::string_view key = "#channels=";
            if (row == 1 && view.substr(0, key.size()) == key) {
                const auto value = view.substr(key.size());
                int parsed = 0;
                const auto res = std::from_chars(value.data(), value.data() + value.size(), parsed);
                if (res.ec != std::errc() || res.ptr != value.data() + value.size() || parsed < 1 || parsed > 2)
                    throw Error(ErrorKind::parse_error, "row 1: channel directive must be 1 or 2");
                channels = parsed;
                continue;
            }
            throw Error(ErrorKind::parse_error, "row " + std::to_string(row) + ": unknown directive");
        }

        const auto fields = detail::split_commas(view);
        if (fields.size() < 2)
            throw Error(ErrorKind::parse_error, "row " + std::to_string(row) + ": expected label and samples");

        RawBeatRecord rec;
        rec.label = std::string(detail::trim(fields[0]));
        rec.channel_count = channels;
        rec.samples.reserve(fields.size() - 1);
        bool numeric = true;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            double v = 0.0;
            if (!detail::parse_double(fields[i], v)) {
                numeric = false;
                break;
            }
            rec.samples.push_back(v);
        }
        if (!numeric) {
            if (header_allowed) {
                header_allowed = false;
                continue;
            }
            throw Error(ErrorKind::parse_error, "row " + std::to_string(row) + ": non-numeric sample");
        }
        header_allowed = false;
        if (rec.label.empty())
            throw Error(ErrorKind::parse_error, "row " + std::to_string(row) + ": empty label");
        if (rec.samples.size() % static_cast<std::size_t>(channels) != 0)
            throw Error(ErrorKind::parse_error, "row " + std::to_string(row) + ": sample count " +
                                                    std::to_string(rec.samples.size()) +
                                                    " not divisible by channel count");
        if (rec.per_channel() < kMinRawSamplesPerChannel)
            throw Error(ErrorKind::parse_error, "row " + std::to_string(row) + ": degenerate beat with " +
                                                    std::to_string(rec.per_channel()) + " samples per channel");
        records.push_back(std::move(rec));
    }

    if (records.empty())
        throw Error(ErrorKind::empty_dataset, "no beat rows found");
    return records;
}

inline std::vector<RawBeatRecord> load_dataset(const std::string& path, DatasetFormat format = DatasetFormat::csv)
{
    (void)format;
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::io_error, "cannot open dataset " + path);
    return parse_dataset(in);
}

/// Linear interpolation of each channel onto `target_len` uniformly spaced
/// points; channels are concatenated. Endpoints are reproduced exactly.
inline Vector resample_beat(const RawBeatRecord& rec, Index target_len)
{
    if (target_len < 2)
        throw Error(ErrorKind::invalid_argument, "target length must be at least 2");
    if (rec.channel_count < 1 || rec.samples.size() % static_cast<std::size_t>(rec.channel_count) != 0)
        throw Error(ErrorKind::invalid_argument, "samples not divisible by channel count");
    const std::size_t n = rec.per_channel();
    if (n < 2)
        throw Error(ErrorKind::degenerate_beat, "channel has fewer than 2 samples");

    Vector out(target_len * rec.channel_count);
    const double step = static_cast<double>(n - 1) / static_cast<double>(target_len - 1);
    for (int c = 0; c < rec.channel_count; ++c) {
        const double* src = rec.samples.data() + static_cast<std::size_t>(c) * n;
        for (Index i = 0; i < target_len; ++i) {
            if (i == target_len - 1) {
                out(c * target_len + i) = src[n - 1];
                continue;
            }
            const double pos = static_cast<double>(i) * step;
            auto lo = static_cast<std::size_t>(pos);
            if (lo >= n - 1)
                lo = n - 2;
            const double frac = pos - static_cast<double>(lo);
            out(c * target_len + i) = src[lo] + frac * (src[lo + 1] - src[lo]);
        }
    }
    return out;
}

struct NormalizedBeat {
    Vector values;
    bool flat = false;  // input was constant; values is all zeros
};

/// Zero mean, unit L2 norm.
inline NormalizedBeat normalize_beat(const Vector& v)
{
    NormalizedBeat out;
    const double mean = v.mean();
    out.values = v.array() - mean;
    const double norm = out.values.norm();
    if (norm == 0.0 || norm <= 1e-14 * std::max(1.0, v.cwiseAbs().maxCoeff())) {
        out.values.setZero();
        out.flat = true;
        return out;
    }
    out.values /= norm;
    // One centering pass after scaling pulls the mean down to rounding level.
    out.values.array() -= out.values.mean();
    out.values /= out.values.norm();
    return out;
}

/// Resamples and normalizes every record into one beat column. Indices of flat
/// beats are appended to `flat_beats` when provided.
inline BeatMatrix build_beat_matrix(const std::vector<RawBeatRecord>& records, Index target_len,
                                    std::vector<Index>* flat_beats = nullptr)
{
    if (records.empty())
        throw Error(ErrorKind::empty_dataset, "no records");
    const int channels = records.front().channel_count;
    Matrix samples(target_len * channels, static_cast<Index>(records.size()));
    std::vector<std::string> labels;
    labels.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].channel_count != channels)
            throw Error(ErrorKind::mixed_channel_count, "record " + std::to_string(i) + " has " +
                                                            std::to_string(records[i].channel_count) +
                                                            " channels, expected " + std::to_string(channels));
        auto norm = normalize_beat(resample_beat(records[i], target_len));
        if (norm.flat && flat_beats != nullptr)
            flat_beats->push_back(static_cast<Index>(i));
        samples.col(static_cast<Index>(i)) = norm.values;
        labels.push_back(records[i].label);
    }
    return BeatMatrix(std::move(samples), std::move(labels), channels);
}

}  // namespace segdict
