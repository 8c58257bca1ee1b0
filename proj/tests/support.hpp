#pragma once

#include "merchcast/dataset.hpp"
#include "merchcast/error.hpp"

#include <doctest.h>

#include <random>

namespace test {

template <typename F>
merchcast::ErrorCode error_code_of(F&& f) {
    try {
        f();
    } catch (const merchcast::Error& e) {
        return e.code();
    }
    FAIL("expected a merchcast::Error");
    return merchcast::ErrorCode::UsageError;
}

inline merchcast::RowMatrix random_matrix(std::mt19937_64& rng, int n, int p) {
    std::normal_distribution<double> z;
    merchcast::RowMatrix x(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) x(i, j) = z(rng);
    return x;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> z;
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = z(rng);
    return v;
}

}  // namespace test

#define CHECK_ERROR(expr, expected) CHECK(::test::error_code_of([&] { (void)(expr); }) == (expected))
