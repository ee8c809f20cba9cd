#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cocge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Bad input: malformed files, inconsistent dimensions, invalid configs.
/// The CLI maps this to exit code 2.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric failure: non-finite values, collapsed embeddings, invariant
/// breaches. The CLI maps this to exit code 1.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Deterministic, portable random stream (splitmix64 core, Box-Muller
/// normals). Streams can be split by label so that unrelated consumers
/// (init, dropout, shuffling) never perturb each other.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : root_(seed), state_(mix(seed)) {}

    /// Child stream derived from this stream's root seed and a label.
    /// Independent of how many numbers were drawn from the parent.
    Rng split(std::string_view label) const;
    Rng split(std::uint64_t salt) const;

    std::uint64_t next_u64();
    double uniform();                 // [0, 1)
    double uniform(double lo, double hi);
    double normal();                  // standard normal
    int uniform_int(int n);           // [0, n)

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t z);

    std::uint64_t root_;
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// True iff every entry of m is finite.
bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

}  // namespace cocge
