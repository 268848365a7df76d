// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace folxray {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr int kDimension = 3;

/// Failure categories. The CLI maps them onto exit codes 2 (validation),
/// 3 (numeric failure) and 4 (I/O).
enum class ErrorKind { validation, numeric, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define FOLXRAY_DEFINE_ERROR(Name, Kind)                                                 \
    class Name : public Error {                                                          \
    public:                                                                              \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, #Name ": " + what) {} \
    }

FOLXRAY_DEFINE_ERROR(ArgumentError, validation);
FOLXRAY_DEFINE_ERROR(ConfigError, validation);
FOLXRAY_DEFINE_ERROR(DomainError, validation);
FOLXRAY_DEFINE_ERROR(PreconditionError, validation);
FOLXRAY_DEFINE_ERROR(CoverageError, validation);
FOLXRAY_DEFINE_ERROR(DegenerateFoliationError, numeric);
FOLXRAY_DEFINE_ERROR(IntegrationError, numeric);
FOLXRAY_DEFINE_ERROR(CertificateError, numeric);
FOLXRAY_DEFINE_ERROR(DampingViolationError, numeric);
FOLXRAY_DEFINE_ERROR(WindowError, numeric);
FOLXRAY_DEFINE_ERROR(ConvergenceError, numeric);
FOLXRAY_DEFINE_ERROR(IoError, io);

#undef FOLXRAY_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Worker pool configuration. Work is split into contiguous static chunks and
// every output slot is written by exactly one worker, so results never depend
// on the worker count.

namespace detail {
inline std::atomic<int>& worker_setting() {
    static std::atomic<int> n{0};
    return n;
}
} // namespace detail

inline void set_workers(int n) { detail::worker_setting().store(std::max(0, n)); }

inline int workers() {
    int n = detail::worker_setting().load();
    if (n > 0) return n;
    if (const char* env = std::getenv("FOLXRAY_WORKERS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(workers()), n);
    if (nw <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nw);
    const std::size_t chunk = (n + nw - 1) / nw;
    for (std::size_t w = 0; w < nw; ++w) {
        pool.emplace_back([&, w] {
            try {
                const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// 64-bit FNV-1a, used for geometry and config identifiers.

class Fnv1a {
public:
    void add(std::string_view s) {
        for (unsigned char c : s) {
            h_ ^= c;
            h_ *= 0x100000001b3ULL;
        }
    }
    void add(double v) {
        unsigned char b[sizeof(double)];
        std::memcpy(b, &v, sizeof v);
        add(std::string_view(reinterpret_cast<const char*>(b), sizeof b));
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
    return s;
}

inline double relative_error(double a, double b) {
    const double d = std::max(std::abs(a), std::abs(b));
    return d == 0.0 ? 0.0 : std::abs(a - b) / d;
}

inline double relative_error(cplx a, cplx b) {
    const double d = std::max(std::abs(a), std::abs(b));
    return d == 0.0 ? 0.0 : std::abs(a - b) / d;
}

} // namespace folxray
