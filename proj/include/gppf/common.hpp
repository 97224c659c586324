#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace gppf {

/// Base class for every error raised by the library. `kind()` is a short
/// machine-readable tag that the CLI forwards in its error payload.
class Error : public std::runtime_error {
  public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

  private:
    std::string kind_;
};

class ParseError : public Error {
  public:
    ParseError(std::size_t line, const std::string& what)
        : Error("parse", "line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

struct ConvergenceError : Error {
    explicit ConvergenceError(const std::string& what) : Error("convergence", what) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& what) : Error("numerical", what) {}
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& what) : Error("argument", what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error("io", what) {}
};

/// Stable 64-bit FNV-1a, used for feeder and dataset fingerprints.
class Fnv1a {
  public:
    void update(const void* data, std::size_t n) {
        auto p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    std::uint64_t digest() const noexcept { return h_; }
    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
        return buf;
    }

  private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

/// Shortest "%.{digits}g" rendering of a double.
inline std::string format_number(double v, int digits = 17) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline bool parse_number(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace gppf
