// Small helpers shared by the test suites.
#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "atdl/matrix.hpp"

namespace testutil {

inline atdl::Matrix random_matrix(atdl::index_t r, atdl::index_t c, std::uint64_t seed,
                                  double scale = 1.0) {
    atdl::Matrix m(r, c);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& x : m.flat()) x = u(rng);
    return m;
}

inline double max_abs_diff(const atdl::Matrix& a, const atdl::Matrix& b) {
    if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
    double d = 0.0;
    for (atdl::index_t i = 0; i < a.size(); ++i)
        d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

inline double max_abs_diff(const atdl::PosVector& a, const atdl::PosVector& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double d = 0.0;
    for (atdl::index_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

inline bool bitwise_equal(const atdl::Matrix& a, const atdl::Matrix& b) {
    if (!a.same_shape(b)) return false;
    for (atdl::index_t i = 0; i < a.size(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

// Unique scratch directory, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("atdl_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

// Restores the strict-deterministic flag on scope exit.
class StrictGuard {
public:
    StrictGuard() : saved_(atdl::strict_deterministic()) {}
    ~StrictGuard() { atdl::set_strict_deterministic(saved_); }

private:
    bool saved_;
};

} // namespace testutil
