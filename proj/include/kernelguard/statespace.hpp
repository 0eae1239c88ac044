#pragma once

// Discrete-time LTI systems: stepping, block composition, frequency response,
// Schur tests and invariant zeros of square systems.

#include "kernelguard/eigen_qr.hpp"
#include "kernelguard/types.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <utility>
#include <vector>

namespace kernelguard {

/// x(k+1) = A x(k) + B u(k),  y(k) = C x(k) + D u(k).
/// `step` returns y(k) computed from the pre-update state.
class StateSpaceSystem {
public:
    StateSpaceSystem() = default;

    StateSpaceSystem(Matrix a, Matrix b, Matrix c, Matrix d)
        : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), d_(std::move(d)) {
        const auto n = a_.rows();
        std::ostringstream msg;
        msg << "state-space dimensions inconsistent: A " << dims_str(a_) << ", B " << dims_str(b_)
            << ", C " << dims_str(c_) << ", D " << dims_str(d_);
        require_dims(a_.cols() == n && b_.rows() == n && c_.cols() == n && c_.rows() == d_.rows() &&
                         b_.cols() == d_.cols(),
                     msg.str());
        x_ = Vector::Zero(n);
    }

    static StateSpaceSystem gain(const Matrix& d) {
        return {Matrix(0, 0), Matrix(0, d.cols()), Matrix(d.rows(), 0), d};
    }
    static StateSpaceSystem identity(Eigen::Index dim) { return gain(Matrix::Identity(dim, dim)); }
    static StateSpaceSystem zero(Eigen::Index outputs, Eigen::Index inputs) {
        return gain(Matrix::Zero(outputs, inputs));
    }

    Eigen::Index order() const { return a_.rows(); }
    Eigen::Index inputs() const { return d_.cols(); }
    Eigen::Index outputs() const { return d_.rows(); }

    const Matrix& A() const { return a_; }
    const Matrix& B() const { return b_; }
    const Matrix& C() const { return c_; }
    const Matrix& D() const { return d_; }

    const Vector& state() const { return x_; }
    void set_state(const Vector& x) {
        require_dims(x.size() == order(), "set_state: expected length " + std::to_string(order()) + ", got " +
                                              std::to_string(x.size()));
        x_ = x;
    }
    void reset() { x_.setZero(); }

    /// Output for input u at the current state, without advancing.
    Vector output(const Vector& u) const {
        check_input(u);
        return c_ * x_ + d_ * u;
    }

    /// Output from state only (the D term omitted); used when D is known to be zero.
    Vector free_output() const { return c_ * x_; }

    void advance(const Vector& u) {
        check_input(u);
        x_ = a_ * x_ + b_ * u;
    }

    Vector step(const Vector& u) {
        Vector y = output(u);
        x_ = a_ * x_ + b_ * u;
        return y;
    }

    /// Simulates from the current state; columns of `u` are time samples.
    Matrix simulate(const Matrix& u) {
        Matrix y(outputs(), u.cols());
        for (Eigen::Index k = 0; k < u.cols(); ++k) y.col(k) = step(u.col(k));
        return y;
    }

    /// Inverse system for invertible square D:
    /// (A − B D⁻¹ C, B D⁻¹, −D⁻¹ C, D⁻¹).
    StateSpaceSystem inverse() const {
        require_dims(inputs() == outputs(), "inverse: system must be square, D is " + dims_str(d_));
        Eigen::FullPivLU<Matrix> lu(d_);
        if (inputs() > 0 && !lu.isInvertible()) throw NumericalError("inverse: feedthrough D is singular");
        Matrix di = inputs() > 0 ? Matrix(lu.inverse()) : Matrix(0, 0);
        return {a_ - b_ * di * c_, b_ * di, -di * c_, di};
    }

private:
    void check_input(const Vector& u) const {
        if (u.size() != inputs())
            throw DimensionError("input has length " + std::to_string(u.size()) + ", system expects " +
                                 std::to_string(inputs()));
    }

    Matrix a_, b_, c_, d_;
    Vector x_;
};

enum class ComposeKind { series, sum, difference };

/// series: u → s1 → s2 (transfer s2·s1). sum/difference: s1 ± s2 sharing the input.
inline StateSpaceSystem compose(ComposeKind kind, const StateSpaceSystem& s1, const StateSpaceSystem& s2) {
    const auto n1 = s1.order(), n2 = s2.order();
    Matrix a = Matrix::Zero(n1 + n2, n1 + n2);
    a.topLeftCorner(n1, n1) = s1.A();
    a.bottomRightCorner(n2, n2) = s2.A();

    if (kind == ComposeKind::series) {
        require_dims(s1.outputs() == s2.inputs(), "compose(series): s1 has " + std::to_string(s1.outputs()) +
                                                      " outputs but s2 takes " + std::to_string(s2.inputs()));
        a.bottomLeftCorner(n2, n1) = s2.B() * s1.C();
        Matrix b(n1 + n2, s1.inputs());
        b << s1.B(), s2.B() * s1.D();
        Matrix c(s2.outputs(), n1 + n2);
        c << s2.D() * s1.C(), s2.C();
        return {a, b, c, s2.D() * s1.D()};
    }

    require_dims(s1.inputs() == s2.inputs() && s1.outputs() == s2.outputs(),
                 "compose(sum/difference): shapes differ, " + dims_str(s1.D()) + " vs " + dims_str(s2.D()));
    const double sign = (kind == ComposeKind::sum) ? 1.0 : -1.0;
    Matrix b(n1 + n2, s1.inputs());
    b << s1.B(), s2.B();
    Matrix c(s1.outputs(), n1 + n2);
    c << s1.C(), sign * s2.C();
    return {a, b, c, s1.D() + sign * s2.D()};
}

/// Matrix-order product g2·g1 (g1 acts first).
inline StateSpaceSystem product(const StateSpaceSystem& g2, const StateSpaceSystem& g1) {
    return compose(ComposeKind::series, g1, g2);
}
inline StateSpaceSystem operator*(const StateSpaceSystem& g2, const StateSpaceSystem& g1) { return product(g2, g1); }
inline StateSpaceSystem operator+(const StateSpaceSystem& a, const StateSpaceSystem& b) {
    return compose(ComposeKind::sum, a, b);
}
inline StateSpaceSystem operator-(const StateSpaceSystem& a, const StateSpaceSystem& b) {
    return compose(ComposeKind::difference, a, b);
}

/// [g1 g2]: inputs concatenated, outputs summed.
inline StateSpaceSystem hstack(const StateSpaceSystem& g1, const StateSpaceSystem& g2) {
    require_dims(g1.outputs() == g2.outputs(), "hstack: output counts differ");
    const auto n1 = g1.order(), n2 = g2.order();
    Matrix a = Matrix::Zero(n1 + n2, n1 + n2);
    a.topLeftCorner(n1, n1) = g1.A();
    a.bottomRightCorner(n2, n2) = g2.A();
    Matrix b = Matrix::Zero(n1 + n2, g1.inputs() + g2.inputs());
    b.topLeftCorner(n1, g1.inputs()) = g1.B();
    b.bottomRightCorner(n2, g2.inputs()) = g2.B();
    Matrix c(g1.outputs(), n1 + n2);
    c << g1.C(), g2.C();
    Matrix d(g1.outputs(), g1.inputs() + g2.inputs());
    d << g1.D(), g2.D();
    return {a, b, c, d};
}

/// [g1; g2]: shared input, outputs stacked.
inline StateSpaceSystem vstack(const StateSpaceSystem& g1, const StateSpaceSystem& g2) {
    require_dims(g1.inputs() == g2.inputs(), "vstack: input counts differ");
    const auto n1 = g1.order(), n2 = g2.order();
    Matrix a = Matrix::Zero(n1 + n2, n1 + n2);
    a.topLeftCorner(n1, n1) = g1.A();
    a.bottomRightCorner(n2, n2) = g2.A();
    Matrix b(n1 + n2, g1.inputs());
    b << g1.B(), g2.B();
    Matrix c = Matrix::Zero(g1.outputs() + g2.outputs(), n1 + n2);
    c.topLeftCorner(g1.outputs(), n1) = g1.C();
    c.bottomRightCorner(g2.outputs(), n2) = g2.C();
    Matrix d(g1.outputs() + g2.outputs(), g1.inputs());
    d << g1.D(), g2.D();
    return {a, b, c, d};
}

inline StateSpaceSystem scaled(const StateSpaceSystem& g, double s) {
    return {g.A(), g.B(), s * g.C(), s * g.D()};
}

/// C (zI − A)⁻¹ B + D. Throws NumericalError when zI − A is numerically singular.
inline CMatrix freq_response(const StateSpaceSystem& sys, Complex z, double tol = 1e-12) {
    const auto n = sys.order();
    CMatrix d = sys.D().cast<Complex>();
    if (n == 0) return d;
    CMatrix m = z * CMatrix::Identity(n, n) - sys.A().cast<Complex>();
    Eigen::PartialPivLU<CMatrix> lu(m);
    if (!(lu.rcond() > tol)) {
        std::ostringstream msg;
        msg << "freq_response: z = " << z << " is (numerically) a pole, rcond " << lu.rcond();
        throw NumericalError(msg.str());
    }
    return sys.C().cast<Complex>() * lu.solve(sys.B().cast<Complex>()) + d;
}

inline EigenResult spectral_radius(const Matrix& m, const EigenOptions& opts = {}) { return eigenvalues(m, opts); }

inline bool is_schur(const Matrix& m) { return m.rows() == 0 || spectral_radius(m).max_modulus < 1.0; }
inline bool is_stable(const StateSpaceSystem& s) { return is_schur(s.A()); }

struct ZeroDirection {
    Complex z0;
    CVector x0;
    CVector g;
    bool has_direction = true;
};

struct ZeroOptions {
    double tolerance = 1e-8;
    std::uint64_t seed = 0x5eedULL;
};

namespace detail {

inline std::vector<Complex> pencil_zeros_with_shift(const Matrix& m1, Eigen::Index n, double s, double tol) {
    const auto nm = m1.rows();
    Matrix pencil = m1;
    pencil.topLeftCorner(n, n) -= s * Matrix::Identity(n, n);
    Eigen::PartialPivLU<Matrix> lu(pencil);
    Matrix rhs = Matrix::Zero(nm, n);
    rhs.topRows(n) = Matrix::Identity(n, n);
    Matrix t11 = lu.solve(rhs).topRows(n);
    const EigenResult ev = eigenvalues(t11);
    const double cutoff = tol * std::max(1.0, t11.norm());
    std::vector<Complex> out;
    for (const Complex& mu : ev.values)
        if (std::abs(mu) > cutoff) out.push_back(s + 1.0 / mu);
    return out;
}

inline double pencil_rcond(const Matrix& m1, Eigen::Index n, double s) {
    Matrix pencil = m1;
    pencil.topLeftCorner(n, n) -= s * Matrix::Identity(n, n);
    return Eigen::PartialPivLU<Matrix>(pencil).rcond();
}

}  // namespace detail

/// Finite invariant zeros of a square system with their null directions
/// [z0 I − A, −B; C, D] [x0; g] = 0.
///
/// Two independent shifts are used and only zeros found by both are kept,
/// which filters the spurious values produced by perturbed infinite zeros.
inline std::vector<ZeroDirection> invariant_zeros(const StateSpaceSystem& sys, const ZeroOptions& opts = {}) {
    if (sys.inputs() != sys.outputs()) {
        throw DimensionError("invariant_zeros: unsupported for non-square systems (" +
                             std::to_string(sys.outputs()) + " outputs, " + std::to_string(sys.inputs()) + " inputs)");
    }
    const auto n = sys.order();
    const auto m = sys.inputs();
    std::vector<ZeroDirection> zeros;
    if (n == 0) return zeros;

    Matrix m1(n + m, n + m);
    m1 << sys.A(), sys.B(), sys.C(), sys.D();

    const double scale = 1.0 + m1.norm();
    std::mt19937_64 gen(opts.seed);
    std::uniform_real_distribution<double> pick(-2.0 * scale, 2.0 * scale);

    std::vector<double> shifts;
    for (int attempt = 0; attempt < 40 && shifts.size() < 2; ++attempt) {
        const double s = pick(gen);
        if (detail::pencil_rcond(m1, n, s) > 1e-10) shifts.push_back(s);
    }
    if (shifts.size() < 2) throw NumericalError("invariant_zeros: Rosenbrock pencil is singular for every trial shift");

    std::vector<Complex> first = detail::pencil_zeros_with_shift(m1, n, shifts[0], opts.tolerance);
    std::vector<Complex> second = detail::pencil_zeros_with_shift(m1, n, shifts[1], opts.tolerance);

    std::vector<bool> used(second.size(), false);
    for (const Complex& z : first) {
        const double match_tol = 1e-6 * std::max(1.0, std::abs(z));
        std::size_t best = second.size();
        double best_dist = match_tol;
        for (std::size_t j = 0; j < second.size(); ++j) {
            if (used[j]) continue;
            const double dist = std::abs(second[j] - z);
            if (dist <= best_dist) {
                best_dist = dist;
                best = j;
            }
        }
        if (best == second.size()) continue;
        used[best] = true;

        Complex z0 = 0.5 * (z + second[best]);
        if (std::abs(z0.imag()) < 1e-12 * std::max(1.0, std::abs(z0))) z0 = Complex(z0.real(), 0.0);

        CMatrix p(n + m, n + m);
        p.topLeftCorner(n, n) = z0 * CMatrix::Identity(n, n) - sys.A().cast<Complex>();
        p.topRightCorner(n, m) = -sys.B().cast<Complex>();
        p.bottomLeftCorner(m, n) = sys.C().cast<Complex>();
        p.bottomRightCorner(m, m) = sys.D().cast<Complex>();

        Eigen::JacobiSVD<CMatrix> svd(p, Eigen::ComputeFullV);
        CVector v = svd.matrixV().col(n + m - 1);
        ZeroDirection zd;
        zd.z0 = z0;
        zd.x0 = v.head(n);
        zd.g = v.tail(m);
        const double residual = (p * v).norm();
        const double bound = opts.tolerance * std::max(1.0, p.norm()) * (zd.x0.norm() + zd.g.norm());
        zd.has_direction = residual <= bound;
        zeros.push_back(std::move(zd));
    }

    std::sort(zeros.begin(), zeros.end(), [](const ZeroDirection& a, const ZeroDirection& b) {
        if (a.z0.real() != b.z0.real()) return a.z0.real() < b.z0.real();
        return a.z0.imag() < b.z0.imag();
    });
    return zeros;
}

/// A family of realizations with a common state layout and one shared state.
/// Switching changes (A, B, C, D) but never resets the state.
class SwitchedSystem {
public:
    SwitchedSystem() = default;

    explicit SwitchedSystem(std::vector<StateSpaceSystem> modes) : modes_(std::move(modes)) {
        require_dims(!modes_.empty(), "SwitchedSystem: needs at least one mode");
        const auto& m0 = modes_.front();
        for (const auto& s : modes_) {
            require_dims(s.order() == m0.order() && s.inputs() == m0.inputs() && s.outputs() == m0.outputs(),
                         "SwitchedSystem: all modes must share dimensions");
        }
        x_ = Vector::Zero(m0.order());
    }

    std::size_t modes() const { return modes_.size(); }
    std::size_t mode() const { return mode_; }
    void set_mode(std::size_t i) {
        if (i >= modes_.size()) throw DimensionError("SwitchedSystem: mode " + std::to_string(i) + " out of range");
        mode_ = i;
    }
    const StateSpaceSystem& realization(std::size_t i) const { return modes_.at(i); }

    Eigen::Index order() const { return modes_.front().order(); }
    Eigen::Index inputs() const { return modes_.front().inputs(); }
    Eigen::Index outputs() const { return modes_.front().outputs(); }

    const Vector& state() const { return x_; }
    void set_state(const Vector& x) {
        require_dims(x.size() == order(), "SwitchedSystem::set_state: wrong length");
        x_ = x;
    }
    void reset() { x_.setZero(); }

    Vector output(const Vector& u) const {
        const auto& s = modes_[mode_];
        require_dims(u.size() == s.inputs(), "SwitchedSystem: input length mismatch");
        return s.C() * x_ + s.D() * u;
    }

    Vector step(const Vector& u) {
        const auto& s = modes_[mode_];
        Vector y = output(u);
        x_ = s.A() * x_ + s.B() * u;
        return y;
    }

private:
    std::vector<StateSpaceSystem> modes_;
    std::size_t mode_ = 0;
    Vector x_;
};

}  // namespace kernelguard
