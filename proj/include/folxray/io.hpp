// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "folxray/core.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace folxray::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using json = nlohmann::json;

/// Fixed-size header buffer with little-endian field writers.
class Header64 {
public:
    Header64() { bytes_.fill(0); }
    explicit Header64(const std::array<char, 64>& b) : bytes_(b) {}

    template <class T>
    void put(std::size_t offset, T v) {
        std::memcpy(bytes_.data() + offset, &v, sizeof(T));
    }
    template <class T>
    T get(std::size_t offset) const {
        T v;
        std::memcpy(&v, bytes_.data() + offset, sizeof(T));
        return v;
    }
    void put_magic(const char (&m)[5]) { std::memcpy(bytes_.data(), m, 4); }
    bool has_magic(const char (&m)[5]) const { return std::memcmp(bytes_.data(), m, 4) == 0; }
    const std::array<char, 64>& bytes() const { return bytes_; }

private:
    std::array<char, 64> bytes_;
};

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot open '" + p.string() + "' for writing");
    return os;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw IoError("file '" + p.string() + "' does not exist");
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("cannot open '" + p.string() + "'");
    return is;
}

inline void write_f64(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> read_f64(std::istream& is, std::size_t n, const std::string& what) {
    std::vector<double> v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (static_cast<std::size_t>(is.gcount()) != n * sizeof(double)) throw IoError("truncated " + what);
    return v;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    auto os = open_out(p);
    os << s;
    if (!os) throw IoError("write failed for '" + p.string() + "'");
}

inline void write_json(const std::filesystem::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline json read_json(const std::filesystem::path& p) {
    auto is = open_in(p);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in '" + p.string() + "': " + e.what());
    }
}

/// Shortest round-trip decimal rendering of a double.
inline std::string fmt(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, end);
}

} // namespace folxray::io
