#pragma once

// Line-oriented text helpers shared by the checkpoint readers and writers.
// Doubles are written as C99 hex floats so every value round-trips exactly.

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>

#include "optexec/common.hpp"

namespace optexec::textio {

inline std::string hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

inline double parse_double(const std::string& token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (token.empty() || end != token.c_str() + token.size()) {
        throw CheckpointError("malformed number '" + token + "'");
    }
    return v;
}

inline std::string next_token(std::istream& is) {
    std::string tok;
    if (!(is >> tok)) throw CheckpointError("unexpected end of input");
    return tok;
}

inline void expect(std::istream& is, const std::string& word) {
    const std::string tok = next_token(is);
    if (tok != word) throw CheckpointError("expected '" + word + "' but found '" + tok + "'");
}

inline double read_double(std::istream& is) { return parse_double(next_token(is)); }

inline long long read_int(std::istream& is) {
    const std::string tok = next_token(is);
    char* end = nullptr;
    const long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end != tok.c_str() + tok.size()) throw CheckpointError("malformed integer '" + tok + "'");
    return v;
}

template <class Vec>
void write_values(std::ostream& os, const Vec& values) {
    os << values.size();
    for (auto v : values) os << ' ' << hex(static_cast<double>(v));
    os << '\n';
}

template <class Vec>
void read_values(std::istream& is, Vec& values) {
    const long long n = read_int(is);
    if (n < 0) throw CheckpointError("negative length");
    values.resize(n);
    for (long long i = 0; i < n; ++i) values[i] = read_double(is);
}

}  // namespace optexec::textio
