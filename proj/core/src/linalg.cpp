#include <darkisp/linalg.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace darkisp::linalg {

void eigen_sym(const double* A, std::size_t n, double* evals, double* evecs) {
    std::vector<double> a(A, A + n * n);
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q)
                off += a[p * n + q] * a[p * n + q];
        if (off < 1e-300) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double theta =
                    (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t =
                    (theta >= 0 ? 1.0 : -1.0) /
                    (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p], vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return a[i * n + i] > a[j * n + j];
    });
    for (std::size_t j = 0; j < n; ++j) {
        evals[j] = a[order[j] * n + order[j]];
        for (std::size_t i = 0; i < n; ++i)
            evecs[i * n + j] = v[i * n + order[j]];
    }
}

bool invert(const double* A, std::size_t n, double* out) {
    std::vector<double> a(A, A + n * n);
    std::vector<double> inv(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col]))
                piv = r;
        if (std::fabs(a[piv * n + col]) < 1e-300) return false;
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a[piv * n + j], a[col * n + j]);
                std::swap(inv[piv * n + j], inv[col * n + j]);
            }
        }
        const double d = a[col * n + col];
        for (std::size_t j = 0; j < n; ++j) {
            a[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r * n + col];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                a[r * n + j] -= f * a[col * n + j];
                inv[r * n + j] -= f * inv[col * n + j];
            }
        }
    }
    std::copy(inv.begin(), inv.end(), out);
    return true;
}

bool invert3(const double A[9], double out[9]) { return invert(A, 3, out); }

double condition_number_sym(const double* G, std::size_t n) {
    std::vector<double> evals(n), evecs(n * n);
    eigen_sym(G, n, evals.data(), evecs.data());
    const double lmax = evals.front(), lmin = evals.back();
    if (lmax <= 0.0) return std::numeric_limits<double>::infinity();
    if (lmin <= lmax * 1e-300)
        return std::numeric_limits<double>::infinity();
    return lmax / lmin;
}

std::size_t pinv_sym(const double* G, std::size_t n, double rtol,
                     double* out) {
    std::vector<double> evals(n), evecs(n * n);
    eigen_sym(G, n, evals.data(), evecs.data());
    const double cutoff = std::max(evals[0], 0.0) * rtol;
    std::size_t rank = 0;
    std::fill(out, out + n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (evals[j] <= cutoff || evals[j] <= 0.0) continue;
        ++rank;
        const double inv = 1.0 / evals[j];
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c)
                out[r * n + c] += inv * evecs[r * n + j] * evecs[c * n + j];
    }
    return rank;
}

}  // namespace darkisp::linalg
