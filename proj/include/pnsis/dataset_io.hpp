#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "pnsis/graph.hpp"

namespace pnsis {

// Decimal with 17 significant digits: round-trips every finite double.
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace detail {

struct LineReader {
    std::istream& in;
    long line_no = 0;
    std::string current;
    bool have_peek = false;

    explicit LineReader(std::istream& s) : in(s) {}

    bool next(std::string& out) {
        if (have_peek) {
            out = current;
            have_peek = false;
            return true;
        }
        if (!std::getline(in, current)) return false;
        ++line_no;
        out = current;
        return true;
    }

    bool peek(std::string& out) {
        if (!have_peek) {
            if (!std::getline(in, current)) return false;
            ++line_no;
            have_peek = true;
        }
        out = current;
        return true;
    }
};

inline bool parse_row(const std::string& line, double* out, int n) {
    const char* p = line.c_str();
    char* end = nullptr;
    for (int i = 0; i < n; ++i) {
        out[i] = std::strtod(p, &end);
        if (end == p) return false;
        p = end;
    }
    while (*p == ' ' || *p == '\t') ++p;
    return *p == '\0';
}

}  // namespace detail

inline void write_dataset(std::ostream& out, const Dataset& ds) {
    out << "PNSIS-DS v1 D=" << ds.feature_dim << " C=" << ds.num_classes << "\n";
    for (const Graph& g : ds.graphs) {
        const int v = g.node_count();
        out << "V=" << v
            << " label=" << (g.label ? std::to_string(*g.label) : "none")
            << " env=" << (g.env_id ? std::to_string(*g.env_id) : "none") << "\n";
        for (int i = 0; i < v; ++i) {
            for (int j = 0; j < ds.feature_dim; ++j)
                out << (j ? " " : "") << fmt17(g.features(i, j));
            out << "\n";
        }
        for (int i = 0; i < v; ++i) {
            for (int j = 0; j < v; ++j)
                out << (j ? " " : "") << fmt17(g.adjacency(i, j));
            out << "\n";
        }
        if (g.gt_mask) {
            for (int i = 0; i < v; ++i) {
                for (int j = 0; j < v; ++j)
                    out << (j ? " " : "") << fmt17((*g.gt_mask)(i, j));
                out << "\n";
            }
        }
    }
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_dataset(out, ds);
    if (!out) throw IoError("write failed: " + path);
}

inline Dataset read_dataset(std::istream& in) {
    detail::LineReader lr(in);
    std::string line;
    if (!lr.next(line)) throw ParseError("missing header", 1);
    Dataset ds;
    {
        int d = -1, c = -1;
        if (std::sscanf(line.c_str(), "PNSIS-DS v1 D=%d C=%d", &d, &c) != 2 || d < 0 || c < 0)
            throw ParseError("bad header: '" + line + "'", lr.line_no);
        ds.feature_dim = d;
        ds.num_classes = c;
    }
    while (lr.next(line)) {
        if (line.empty()) continue;
        int v = -1;
        char label_buf[32] = {0}, env_buf[32] = {0};
        if (std::sscanf(line.c_str(), "V=%d label=%31s env=%31s", &v, label_buf, env_buf) != 3)
            throw ParseError("bad graph record: '" + line + "'", lr.line_no);
        if (v <= 0) throw SchemaError("non-positive node count", lr.line_no);
        Graph g;
        g.features = Mat::Zero(v, ds.feature_dim);
        g.adjacency = Mat::Zero(v, v);
        std::string slabel(label_buf), senv(env_buf);
        if (slabel != "none") {
            int y = std::stoi(slabel);
            if (y < 0 || y >= ds.num_classes)
                throw SchemaError("label out of range", lr.line_no);
            g.label = y;
        }
        if (senv != "none") g.env_id = std::stoi(senv);

        std::vector<double> row(std::max(v, ds.feature_dim));
        for (int i = 0; i < v; ++i) {
            if (!lr.next(line)) throw SchemaError("truncated feature block", lr.line_no);
            if (!detail::parse_row(line, row.data(), ds.feature_dim))
                throw SchemaError("feature row has wrong arity", lr.line_no);
            for (int j = 0; j < ds.feature_dim; ++j) g.features(i, j) = row[j];
        }
        for (int i = 0; i < v; ++i) {
            if (!lr.next(line)) throw SchemaError("truncated adjacency block", lr.line_no);
            if (!detail::parse_row(line, row.data(), v))
                throw SchemaError("adjacency row has wrong arity", lr.line_no);
            for (int j = 0; j < v; ++j) g.adjacency(i, j) = row[j];
        }
        // Optional gt_mask: present iff the next line is numeric rather than a
        // new graph record.
        std::string peeked;
        if (lr.peek(peeked) && peeked.rfind("V=", 0) != 0 && !peeked.empty()) {
            Mat m = Mat::Zero(v, v);
            for (int i = 0; i < v; ++i) {
                if (!lr.next(line)) throw SchemaError("truncated mask block", lr.line_no);
                if (!detail::parse_row(line, row.data(), v))
                    throw SchemaError("mask row has wrong arity", lr.line_no);
                for (int j = 0; j < v; ++j) m(i, j) = row[j];
            }
            g.gt_mask = std::move(m);
        }
        ds.graphs.push_back(std::move(g));
    }
    return ds;
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    return read_dataset(in);
}

}  // namespace pnsis
