#pragma once

// Text formats for matrices and trained models.
//
// A matrix block is a header line `rows cols name` followed by `rows` lines of
// whitespace-separated values printed with 17 significant digits, so values
// round-trip exactly. Model files start with a `key value...` header closed by
// `end`, followed by matrix blocks.

#include <segdict/beat_model.hpp>
#include <segdict/classifier.hpp>
#include <segdict/error.hpp>
#include <segdict/ingest.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace segdict {

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void check_token(const std::string& s, const std::string& what)
{
    if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos)
        throw Error(ErrorKind::invalid_argument, what + " must be a nonempty token without whitespace: '" + s + "'");
}

inline void write_matrix(std::ostream& out, const Matrix& m, const std::string& name)
{
    check_token(name, "matrix name");
    out << m.rows() << ' ' << m.cols() << ' ' << name << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) {
            if (c)
                out << ' ';
            out << format_double(m(r, c));
        }
        out << '\n';
    }
}

struct NamedMatrix {
    std::string name;
    Matrix values;
};

inline NamedMatrix read_matrix(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw Error(ErrorKind::parse_error, "expected matrix header, found end of input");
    std::istringstream head(line);
    long long rows = -1, cols = -1;
    NamedMatrix out;
    std::string extra;
    if (!(head >> rows >> cols >> out.name) || (head >> extra) || rows < 0 || cols < 0)
        throw Error(ErrorKind::parse_error, "bad matrix header '" + line + "'");
    out.values.resize(rows, cols);
    for (long long r = 0; r < rows; ++r) {
        if (!std::getline(in, line))
            throw Error(ErrorKind::parse_error, out.name + ": missing row " + std::to_string(r + 1));
        std::istringstream row(line);
        std::string tok;
        long long c = 0;
        while (row >> tok) {
            double v = 0.0;
            if (c >= cols || !detail::parse_double(tok, v))
                throw Error(ErrorKind::parse_error, out.name + ": bad value in row " + std::to_string(r + 1));
            out.values(r, c++) = v;
        }
        if (c != cols)
            throw Error(ErrorKind::parse_error, out.name + ": row " + std::to_string(r + 1) + " has " +
                                                    std::to_string(c) + " values, expected " + std::to_string(cols));
    }
    return out;
}

inline Matrix read_matrix(std::istream& in, const std::string& expected_name)
{
    NamedMatrix m = read_matrix(in);
    if (m.name != expected_name)
        throw Error(ErrorKind::parse_error, "expected matrix '" + expected_name + "', found '" + m.name + "'");
    return std::move(m.values);
}

/// Ordered `key value...` lines up to a line reading `end`.
class Header {
public:
    void add(const std::string& key, const std::vector<std::string>& values)
    {
        check_token(key, "header key");
        for (const auto& v : values)
            check_token(v, "header value for " + key);
        entries_.emplace_back(key, values);
    }
    void add_value(const std::string& key, const std::string& value) { add(key, std::vector<std::string>{value}); }

    void write(std::ostream& out) const
    {
        for (const auto& [key, values] : entries_) {
            out << key;
            for (const auto& v : values)
                out << ' ' << v;
            out << '\n';
        }
        out << "end\n";
    }

    static Header read(std::istream& in)
    {
        Header h;
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream ss(line);
            std::string key, v;
            if (!(ss >> key))
                continue;
            if (key == "end")
                return h;
            std::vector<std::string> values;
            while (ss >> v)
                values.push_back(v);
            h.entries_.emplace_back(key, std::move(values));
        }
        throw Error(ErrorKind::parse_error, "model header is not terminated by 'end'");
    }

    const std::vector<std::string>& values(const std::string& key) const
    {
        for (const auto& [k, v] : entries_)
            if (k == key)
                return v;
        throw Error(ErrorKind::parse_error, "model header lacks '" + key + "'");
    }

    /// Every entry with this key, in file order.
    std::vector<std::vector<std::string>> all(const std::string& key) const
    {
        std::vector<std::vector<std::string>> out;
        for (const auto& [k, v] : entries_)
            if (k == key)
                out.push_back(v);
        return out;
    }

    const std::string& value(const std::string& key) const
    {
        const auto& v = values(key);
        if (v.size() != 1)
            throw Error(ErrorKind::parse_error, "header key '" + key + "' expects one value");
        return v.front();
    }

    double number(const std::string& key) const { return to_number(value(key), key); }
    long long integer(const std::string& key) const { return to_integer(value(key), key); }

    static double to_number(const std::string& s, const std::string& key)
    {
        double v = 0.0;
        if (!detail::parse_double(s, v))
            throw Error(ErrorKind::parse_error, "header key '" + key + "': bad number '" + s + "'");
        return v;
    }

    static long long to_integer(const std::string& s, const std::string& key)
    {
        long long v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw Error(ErrorKind::parse_error, "header key '" + key + "': bad integer '" + s + "'");
        return v;
    }

private:
    std::vector<std::pair<std::string, std::vector<std::string>>> entries_;
};

inline void expect_magic(const Header& h, const std::string& magic)
{
    const auto& v = h.values("format");
    if (v.size() != 2 || v[0] != magic || v[1] != "1")
        throw Error(ErrorKind::parse_error, "not a " + magic + " file");
}

inline void write_svm_model(std::ostream& out, const MultiClassSvm& model)
{
    Header h;
    h.add("format", {"segdict-svm", "1"});
    for (const auto& c : model.classes)
        check_token(c, "class label");
    h.add("classes", model.classes);
    h.add_value("machines", std::to_string(model.machines.size()));
    for (const auto& m : model.machines)
        h.add("machine", {m.class_pair.first, m.class_pair.second, format_double(m.gamma), format_double(m.c_penalty),
                          format_double(m.bias), std::to_string(m.support_vectors.cols())});
    h.write(out);
    for (std::size_t p = 0; p < model.machines.size(); ++p) {
        const auto& m = model.machines[p];
        write_matrix(out, m.support_vectors, "support_vectors_" + std::to_string(p + 1));
        write_matrix(out, m.alphas.transpose(), "signed_alphas_" + std::to_string(p + 1));
    }
}

inline MultiClassSvm read_svm_model(std::istream& in)
{
    const Header h = Header::read(in);
    expect_magic(h, "segdict-svm");
    MultiClassSvm model;
    model.classes = h.values("classes");
    const auto machines = h.all("machine");
    if (static_cast<long long>(machines.size()) != h.integer("machines"))
        throw Error(ErrorKind::parse_error, "machine count does not match header");
    const std::size_t nc = model.classes.size();
    if (machines.size() != nc * (nc - 1) / 2)
        throw Error(ErrorKind::parse_error, "one-vs-one model needs one machine per class pair");
    for (std::size_t p = 0; p < machines.size(); ++p) {
        const auto& f = machines[p];
        if (f.size() != 6)
            throw Error(ErrorKind::parse_error, "machine line needs 6 fields");
        TrainedSvm m;
        m.class_pair = {f[0], f[1]};
        m.gamma = Header::to_number(f[2], "machine");
        m.c_penalty = Header::to_number(f[3], "machine");
        m.bias = Header::to_number(f[4], "machine");
        const std::string tag = std::to_string(p + 1);
        m.support_vectors = read_matrix(in, "support_vectors_" + tag);
        const Matrix a = read_matrix(in, "signed_alphas_" + tag);
        if (a.rows() != 1 || a.cols() != m.support_vectors.cols() ||
            a.cols() != Header::to_integer(f[5], "machine"))
            throw Error(ErrorKind::parse_error, "machine " + tag + ": alpha count does not match support vectors");
        m.alphas = a.row(0).transpose();
        model.machines.push_back(std::move(m));
    }
    return model;
}

inline std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::io_error, "cannot write " + path);
    return out;
}

inline std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::io_error, "cannot open " + path);
    return in;
}

}  // namespace segdict
