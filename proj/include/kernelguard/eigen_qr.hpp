#pragma once

// Real nonsymmetric eigenvalues by Householder reduction to upper Hessenberg
// form followed by the Francis implicit double-shift QR iteration.

#include "kernelguard/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace kernelguard {

struct EigenOptions {
    double tolerance = 1e-12;  // relative deflation threshold on subdiagonal entries
    int max_sweeps = 500;      // per eigenvalue (or pair) before giving up
};

struct EigenResult {
    std::vector<Complex> values;
    double max_modulus = 0.0;

    bool is_schur() const { return max_modulus < 1.0; }
};

namespace detail {

// In-place orthogonal similarity H <- Q^T H Q with H upper Hessenberg on return.
inline void reduce_to_hessenberg(Matrix& h) {
    const Eigen::Index n = h.rows();
    Vector ort = Vector::Zero(n);
    for (Eigen::Index m = 1; m + 1 < n; ++m) {
        double scale = 0.0;
        for (Eigen::Index i = m; i < n; ++i) scale += std::abs(h(i, m - 1));
        if (scale == 0.0) continue;

        double hh = 0.0;
        for (Eigen::Index i = n - 1; i >= m; --i) {
            ort(i) = h(i, m - 1) / scale;
            hh += ort(i) * ort(i);
        }
        double g = std::sqrt(hh);
        if (ort(m) > 0) g = -g;
        hh -= ort(m) * g;
        ort(m) -= g;

        for (Eigen::Index j = m; j < n; ++j) {
            double f = 0.0;
            for (Eigen::Index i = n - 1; i >= m; --i) f += ort(i) * h(i, j);
            f /= hh;
            for (Eigen::Index i = m; i < n; ++i) h(i, j) -= f * ort(i);
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            double f = 0.0;
            for (Eigen::Index j = n - 1; j >= m; --j) f += ort(j) * h(i, j);
            f /= hh;
            for (Eigen::Index j = m; j < n; ++j) h(i, j) -= f * ort(j);
        }
        ort(m) *= scale;
        h(m, m - 1) = scale * g;
    }
}

}  // namespace detail

/// Eigenvalues of a real square matrix. Throws NumericalError when an eigenvalue
/// fails to deflate within `opts.max_sweeps` double-shift sweeps.
inline EigenResult eigenvalues(const Matrix& a, const EigenOptions& opts = {}) {
    require_dims(a.rows() == a.cols(), "eigenvalues: matrix must be square, got " + dims_str(a));
    const Eigen::Index nn = a.rows();
    EigenResult out;
    if (nn == 0) return out;
    if (!a.allFinite()) throw NumericalError("eigenvalues: matrix has non-finite entries");

    Matrix h = a;
    detail::reduce_to_hessenberg(h);

    Vector d = Vector::Zero(nn);
    Vector e = Vector::Zero(nn);
    const double eps = std::max(opts.tolerance, std::numeric_limits<double>::epsilon());

    double norm = 0.0;
    for (Eigen::Index i = 0; i < nn; ++i)
        for (Eigen::Index j = std::max<Eigen::Index>(i - 1, 0); j < nn; ++j) norm += std::abs(h(i, j));

    Eigen::Index n = nn - 1;
    const Eigen::Index low = 0;
    double exshift = 0.0;
    double p = 0, q = 0, r = 0, s = 0, z = 0, t = 0, w = 0, x = 0, y = 0;
    int iter = 0;

    while (n >= low) {
        Eigen::Index l = n;
        while (l > low) {
            s = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
            if (s == 0.0) s = norm;
            if (std::abs(h(l, l - 1)) <= eps * s) break;
            --l;
        }

        if (l == n) {
            h(n, n) += exshift;
            d(n) = h(n, n);
            e(n) = 0.0;
            --n;
            iter = 0;
        } else if (l == n - 1) {
            w = h(n, n - 1) * h(n - 1, n);
            p = (h(n - 1, n - 1) - h(n, n)) / 2.0;
            q = p * p + w;
            z = std::sqrt(std::abs(q));
            h(n, n) += exshift;
            h(n - 1, n - 1) += exshift;
            x = h(n, n);
            if (q >= 0) {
                z = (p >= 0) ? p + z : p - z;
                d(n - 1) = x + z;
                d(n) = d(n - 1);
                if (z != 0.0) d(n) = x - w / z;
                e(n - 1) = 0.0;
                e(n) = 0.0;
            } else {
                d(n - 1) = x + p;
                d(n) = x + p;
                e(n - 1) = z;
                e(n) = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h(n, n);
            y = 0.0;
            w = 0.0;
            if (l < n) {
                y = h(n - 1, n - 1);
                w = h(n, n - 1) * h(n - 1, n);
            }

            // Exceptional shifts break cycles on pathological inputs.
            if (iter == 10) {
                exshift += x;
                for (Eigen::Index i = low; i <= n; ++i) h(i, i) -= x;
                s = std::abs(h(n, n - 1)) + std::abs(h(n - 1, n - 2));
                x = y = 0.75 * s;
                w = -0.4375 * s * s;
            }
            if (iter == 30) {
                s = (y - x) / 2.0;
                s = s * s + w;
                if (s > 0) {
                    s = std::sqrt(s);
                    if (y < x) s = -s;
                    s = x - w / ((y - x) / 2.0 + s);
                    for (Eigen::Index i = low; i <= n; ++i) h(i, i) -= s;
                    exshift += s;
                    x = y = w = 0.964;
                }
            }

            if (++iter > opts.max_sweeps) {
                std::ostringstream msg;
                msg << "eigenvalues: QR iteration did not converge after " << opts.max_sweeps
                    << " sweeps (order " << nn << ", active block [" << l << "," << n
                    << "], last subdiagonal " << std::abs(h(n, n - 1)) << ")";
                throw NumericalError(msg.str());
            }

            Eigen::Index m = n - 2;
            while (m >= l) {
                z = h(m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / h(m + 1, m) + h(m, m + 1);
                q = h(m + 1, m + 1) - z - r - s;
                r = h(m + 2, m + 1);
                s = std::abs(p) + std::abs(q) + std::abs(r);
                p /= s;
                q /= s;
                r /= s;
                if (m == l) break;
                if (std::abs(h(m, m - 1)) * (std::abs(q) + std::abs(r)) <
                    eps * (std::abs(p) * (std::abs(h(m - 1, m - 1)) + std::abs(z) + std::abs(h(m + 1, m + 1))))) {
                    break;
                }
                --m;
            }

            for (Eigen::Index i = m + 2; i <= n; ++i) {
                h(i, i - 2) = 0.0;
                if (i > m + 2) h(i, i - 3) = 0.0;
            }

            for (Eigen::Index k = m; k <= n - 1; ++k) {
                const bool notlast = (k != n - 1);
                if (k != m) {
                    p = h(k, k - 1);
                    q = h(k + 1, k - 1);
                    r = notlast ? h(k + 2, k - 1) : 0.0;
                    x = std::abs(p) + std::abs(q) + std::abs(r);
                    if (x == 0.0) continue;
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = std::sqrt(p * p + q * q + r * r);
                if (p < 0) s = -s;
                if (s != 0) {
                    if (k != m) {
                        h(k, k - 1) = -s * x;
                    } else if (l != m) {
                        h(k, k - 1) = -h(k, k - 1);
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for (Eigen::Index j = k; j < nn; ++j) {
                        p = h(k, j) + q * h(k + 1, j);
                        if (notlast) {
                            p += r * h(k + 2, j);
                            h(k + 2, j) -= p * z;
                        }
                        h(k, j) -= p * x;
                        h(k + 1, j) -= p * y;
                    }
                    for (Eigen::Index i = 0; i <= std::min(n, k + 3); ++i) {
                        p = x * h(i, k) + y * h(i, k + 1);
                        if (notlast) {
                            p += z * h(i, k + 2);
                            h(i, k + 2) -= p * r;
                        }
                        h(i, k) -= p;
                        h(i, k + 1) -= p * q;
                    }
                }
            }
        }
    }
    (void)t;

    out.values.reserve(static_cast<std::size_t>(nn));
    for (Eigen::Index i = 0; i < nn; ++i) {
        out.values.emplace_back(d(i), e(i));
        out.max_modulus = std::max(out.max_modulus, std::abs(out.values.back()));
    }
    return out;
}

}  // namespace kernelguard
