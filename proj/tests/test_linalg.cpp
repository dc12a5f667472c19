#include <doctest.h>

#include <array>
#include <cmath>
#include <limits>

#include <darkisp/linalg.hpp>
#include <darkisp/rng.hpp>

using namespace darkisp;

TEST_CASE("eigen_sym diagonal matrix") {
    const double a[9] = {3, 0, 0, 0, 1, 0, 0, 0, 2};
    double evals[3], evecs[9];
    linalg::eigen_sym(a, 3, evals, evecs);
    CHECK(evals[0] == doctest::Approx(3.0));
    CHECK(evals[1] == doctest::Approx(2.0));
    CHECK(evals[2] == doctest::Approx(1.0));
}

TEST_CASE("eigen_sym reconstructs A = V diag V^T") {
    Rng rng(3);
    double m[16];
    for (double& v : m) v = rng.uniform(-1, 1);
    double a[16];  // symmetrize via M^T M
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) acc += m[k * 4 + r] * m[k * 4 + c];
            a[r * 4 + c] = acc;
        }
    double evals[4], v[16];
    linalg::eigen_sym(a, 4, evals, v);
    for (int i = 1; i < 4; ++i) CHECK(evals[i - 1] >= evals[i]);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            double acc = 0;
            for (int k = 0; k < 4; ++k)
                acc += v[r * 4 + k] * evals[k] * v[c * 4 + k];
            CHECK(acc == doctest::Approx(a[r * 4 + c]).epsilon(1e-9));
        }
}

TEST_CASE("invert round trip and singular detection") {
    Rng rng(4);
    double a[16];
    for (double& v : a) v = rng.uniform(-1, 1);
    for (int i = 0; i < 4; ++i) a[i * 4 + i] += 3.0;  // well-conditioned
    double inv[16];
    REQUIRE(linalg::invert(a, 4, inv));
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) acc += a[r * 4 + k] * inv[k * 4 + c];
            CHECK(acc == doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-10));
        }
    double sing[9] = {1, 2, 3, 2, 4, 6, 0, 0, 1};
    double out[9];
    CHECK_FALSE(linalg::invert(sing, 3, out));
}

TEST_CASE("condition number") {
    const double id[16] = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    CHECK(linalg::condition_number_sym(id, 4) == doctest::Approx(1.0));
    const double d[16] = {4, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    CHECK(linalg::condition_number_sym(d, 4) == doctest::Approx(4.0));
    const double psd[9] = {1, 0, 0, 0, 1, 0, 0, 0, 0};  // singular
    CHECK(std::isinf(linalg::condition_number_sym(psd, 3)));
}

TEST_CASE("pinv_sym truncates small eigenvalues") {
    // rank-2 PSD matrix built from two outer products
    const double u1[3] = {1, 1, 0}, u2[3] = {0, 0, 2};
    double a[9];
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a[r * 3 + c] = u1[r] * u1[c] + u2[r] * u2[c];
    double p[9];
    const std::size_t rank = linalg::pinv_sym(a, 3, 1e-12, p);
    CHECK(rank == 2);
    // A * pinv(A) * A == A for the Moore-Penrose inverse
    double ap[9], apa[9];
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double acc = 0;
            for (int k = 0; k < 3; ++k) acc += a[r * 3 + k] * p[k * 3 + c];
            ap[r * 3 + c] = acc;
        }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double acc = 0;
            for (int k = 0; k < 3; ++k) acc += ap[r * 3 + k] * a[k * 3 + c];
            apa[r * 3 + c] = acc;
        }
    for (int i = 0; i < 9; ++i)
        CHECK(apa[i] == doctest::Approx(a[i]).epsilon(1e-10));
}

TEST_CASE("pinv agrees with inverse on full-rank input") {
    Rng rng(9);
    double m[16], a[16];
    for (double& v : m) v = rng.uniform(-1, 1);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            double acc = r == c ? 2.0 : 0.0;
            for (int k = 0; k < 4; ++k) acc += m[k * 4 + r] * m[k * 4 + c];
            a[r * 4 + c] = acc;
        }
    double inv[16], p[16];
    REQUIRE(linalg::invert(a, 4, inv));
    CHECK(linalg::pinv_sym(a, 4, 1e-12, p) == 4);
    for (int i = 0; i < 16; ++i)
        CHECK(p[i] == doctest::Approx(inv[i]).epsilon(1e-8));
}
