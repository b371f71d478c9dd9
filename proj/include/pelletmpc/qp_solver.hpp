#pragma once

// Dense primal active-set solver for small convex QPs
//
//   min  1/2 u'Hu + g'u   s.t.  A u <= b,  lb <= u <= ub
//
// Constraints are numbered  [0, d)      lower bounds  -u_j <= -lb_j
//                           [d, 2d)     upper bounds   u_j <=  ub_j
//                           [2d, 2d+q)  general rows   A_i u <= b_i
// and the working set is kept linearly independent. Variables with
// lb == ub are held by their lower-bound row as an equality.

#include "pelletmpc/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace pelletmpc {

enum class QpStatus { optimal, infeasible, iteration_limit };

inline const char* to_string(QpStatus s)
{
    switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::iteration_limit: return "iteration_limit";
    }
    return "unknown";
}

struct QpProblem {
    Matrix H;
    Vector g;
    Matrix A_ineq;
    Vector b_ineq;
    Vector lb;
    Vector ub;

    Index dim() const { return g.size(); }
    Index num_ineq() const { return A_ineq.rows(); }

    void validate() const
    {
        const Index d = dim();
        require_dims(H.rows() == d && H.cols() == d, "QpProblem: H must be d x d");
        require_dims(lb.size() == d && ub.size() == d, "QpProblem: bounds must have length d");
        require_dims(A_ineq.cols() == d || A_ineq.rows() == 0, "QpProblem: A_ineq must have d columns");
        require_dims(b_ineq.size() == A_ineq.rows(), "QpProblem: b_ineq length mismatch");
        for (Index j = 0; j < d; ++j)
            require(lb(j) <= ub(j), "QpProblem: lb must not exceed ub");
        if (!H.allFinite() || !g.allFinite() || !A_ineq.allFinite() || !b_ineq.allFinite())
            throw NumericalError("QpProblem: non-finite data");
    }
};

struct QpSolution {
    Vector u_star;
    double objective = std::numeric_limits<double>::infinity();
    QpStatus status = QpStatus::iteration_limit;
    std::vector<int> active_set;
    int iterations = 0;
    /// Nonnegative multipliers for every constraint in the numbering above.
    Vector multipliers;
    /// Tikhonov shift that was added to the diagonal of H.
    double regularization = 0.0;
};

struct QpSettings {
    int max_iterations = 0;  ///< 0 selects 200 * d
    double feasibility_tol = 1e-9;
    double jitter_factor = 1e-10;
};

struct KktResiduals {
    double primal = 0.0;          ///< max constraint violation
    double stationarity = 0.0;    ///< |Hu + g + sum lambda_c a_c|_inf
    double complementarity = 0.0; ///< max |lambda_c * slack_c|
    double dual = 0.0;            ///< most negative multiplier (as positive number)
};

namespace detail {

struct ConstraintView {
    const QpProblem& p;
    Index d;
    Index q;

    explicit ConstraintView(const QpProblem& prob)
        : p(prob), d(prob.dim()), q(prob.num_ineq()) {}

    Index count() const { return 2 * d + q; }

    bool is_lower(Index c) const { return c < d; }
    bool is_upper(Index c) const { return c >= d && c < 2 * d; }

    bool finite(Index c) const
    {
        if (is_lower(c)) return std::isfinite(p.lb(c));
        if (is_upper(c)) return std::isfinite(p.ub(c - d));
        return true;
    }

    /// Upper bound of a fixed variable duplicates its lower-bound equality.
    bool redundant(Index c) const { return is_upper(c) && p.lb(c - d) == p.ub(c - d); }

    bool equality(Index c) const { return is_lower(c) && p.lb(c) == p.ub(c); }

    double dot(Index c, const Vector& x) const
    {
        if (is_lower(c)) return -x(c);
        if (is_upper(c)) return x(c - d);
        return p.A_ineq.row(c - 2 * d).dot(x);
    }

    double rhs(Index c) const
    {
        if (is_lower(c)) return -p.lb(c);
        if (is_upper(c)) return p.ub(c - d);
        return p.b_ineq(c - 2 * d);
    }

    Vector row(Index c) const
    {
        if (is_lower(c)) return -Vector::Unit(d, c);
        if (is_upper(c)) return Vector::Unit(d, c - d);
        return p.A_ineq.row(c - 2 * d).transpose();
    }

    double violation(const Vector& x) const
    {
        double v = 0.0;
        for (Index c = 0; c < count(); ++c)
            if (finite(c)) v = std::max(v, dot(c, x) - rhs(c));
        return v;
    }
};

inline double objective(const QpProblem& p, const Vector& u)
{
    return 0.5 * u.dot(p.H * u) + p.g.dot(u);
}

}  // namespace detail

inline KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s)
{
    detail::ConstraintView cv(p);
    KktResiduals r;
    Vector grad = p.H * s.u_star + p.g;
    for (Index c = 0; c < cv.count(); ++c) {
        if (!cv.finite(c)) continue;
        const double slack = cv.rhs(c) - cv.dot(c, s.u_star);
        r.primal = std::max(r.primal, -slack);
        const double lam = s.multipliers.size() == cv.count() ? s.multipliers(c) : 0.0;
        if (lam != 0.0) grad += lam * cv.row(c);
        r.complementarity = std::max(r.complementarity, std::abs(lam * slack));
        r.dual = std::max(r.dual, -lam);
    }
    r.stationarity = grad.lpNorm<Eigen::Infinity>();
    return r;
}

class ActiveSetQpSolver {
public:
    explicit ActiveSetQpSolver(QpSettings settings = {}) : settings_(settings) {}

    const QpSettings& settings() const { return settings_; }

    QpSolution solve(const QpProblem& p, const QpSolution* warm = nullptr) const
    {
        p.validate();
        const Index d = p.dim();
        QpSolution out;
        if (d == 0) {
            out.u_star = Vector(0);
            out.objective = 0.0;
            out.status = p.b_ineq.size() == 0 || p.b_ineq.minCoeff() >= -settings_.feasibility_tol
                             ? QpStatus::optimal
                             : QpStatus::infeasible;
            out.multipliers = Vector::Zero(p.num_ineq());
            return out;
        }

        detail::ConstraintView cv(p);
        const double trace = p.H.trace();
        const double jitter = trace > 0.0 ? settings_.jitter_factor * trace / static_cast<double>(d) : 0.0;
        Matrix H = p.H;
        H.diagonal().array() += jitter;
        out.regularization = jitter;

        // Starting point: warm start if supplied, else the lower corner.
        Vector x(d);
        if (warm && warm->u_star.size() == d && warm->u_star.allFinite())
            x = warm->u_star;
        else
            x = p.lb;
        for (Index j = 0; j < d; ++j) {
            double lo = std::isfinite(p.lb(j)) ? p.lb(j) : -1e300;
            double hi = std::isfinite(p.ub(j)) ? p.ub(j) : 1e300;
            x(j) = std::clamp(x(j), lo, hi);
            if (!std::isfinite(x(j))) x(j) = 0.0;
        }

        int phase1_iters = 0;
        if (cv.violation(x) > settings_.feasibility_tol) {
            std::optional<Vector> feasible = find_feasible_point(p, x, phase1_iters);
            if (!feasible) {
                out.u_star = x;
                out.status = QpStatus::infeasible;
                out.iterations = phase1_iters;
                out.objective = detail::objective(p, x);
                out.multipliers = Vector::Zero(cv.count());
                return out;
            }
            x = *feasible;
        }

        std::vector<int> candidates;
        if (warm)
            for (int c : warm->active_set) candidates.push_back(c);
        for (Index c = 0; c < cv.count(); ++c) candidates.push_back(static_cast<int>(c));
        std::vector<int> working = initial_working_set(cv, x, candidates);

        const int max_iter = settings_.max_iterations > 0 ? settings_.max_iterations : static_cast<int>(200 * d);
        const double gscale = 1.0 + p.g.lpNorm<Eigen::Infinity>();
        Vector lambda;
        int iter = 0;
        bool converged = false;
        while (iter < max_iter) {
            ++iter;
            const Vector grad = H * x + p.g;
            const Index k = static_cast<Index>(working.size());
            Matrix Aw(d, k);
            for (Index i = 0; i < k; ++i) Aw.col(i) = cv.row(working[static_cast<std::size_t>(i)]);

            Matrix Y, Z, R;
            factor_working_set(Aw, Y, Z, R);

            Vector step = Vector::Zero(d);
            bool ray = false;
            if (Z.cols() > 0) {
                const Vector rg = Z.transpose() * grad;
                if (rg.lpNorm<Eigen::Infinity>() > 1e-14 * gscale) {
                    const Matrix Hz = Z.transpose() * H * Z;
                    Eigen::LLT<Matrix> llt(Hz);
                    if (llt.info() == Eigen::Success) {
                        step = -Z * llt.solve(rg);
                    } else {
                        step = semidefinite_step(Hz, Z, rg, ray);
                    }
                }
            }

            const double xscale = 1.0 + x.lpNorm<Eigen::Infinity>();
            if (!ray && step.lpNorm<Eigen::Infinity>() <= 1e-13 * xscale) {
                lambda = k > 0 ? Vector(R.triangularView<Eigen::Upper>().solve(Y.transpose() * (-grad)))
                               : Vector(0);
                Index drop = -1;
                double most_negative = -1e-12 * gscale;
                for (Index i = 0; i < k; ++i) {
                    const int c = working[static_cast<std::size_t>(i)];
                    if (cv.equality(c)) continue;
                    if (lambda(i) < most_negative ||
                        (drop >= 0 && lambda(i) == most_negative && c < working[static_cast<std::size_t>(drop)])) {
                        most_negative = lambda(i);
                        drop = i;
                    }
                }
                if (drop < 0) {
                    converged = true;
                    break;
                }
                working.erase(working.begin() + drop);
                continue;
            }

            double alpha = ray ? std::numeric_limits<double>::infinity() : 1.0;
            int blocking = -1;
            for (Index c = 0; c < cv.count(); ++c) {
                if (!cv.finite(c) || cv.redundant(c)) continue;
                if (std::find(working.begin(), working.end(), static_cast<int>(c)) != working.end()) continue;
                const double ap = cv.dot(c, step);
                if (ap <= 1e-14 * (1.0 + step.lpNorm<Eigen::Infinity>())) continue;
                const double slack = std::max(0.0, cv.rhs(c) - cv.dot(c, x));
                const double ac = slack / ap;
                if (ac < alpha) {
                    alpha = ac;
                    blocking = static_cast<int>(c);
                }
            }
            if (!std::isfinite(alpha)) throw NumericalError("ActiveSetQpSolver: unbounded direction");
            x += alpha * step;
            if (blocking >= 0) working.push_back(blocking);
        }

        out.u_star = x;
        out.iterations = iter + phase1_iters;
        out.objective = detail::objective(p, x);
        out.status = converged ? QpStatus::optimal : QpStatus::iteration_limit;
        out.active_set = working;
        out.multipliers = Vector::Zero(cv.count());
        if (converged) {
            for (std::size_t i = 0; i < working.size(); ++i) {
                const int c = working[i];
                const double lam = lambda(static_cast<Index>(i));
                if (cv.equality(c) && lam < 0.0)
                    out.multipliers(c + d) = -lam;  // fixed variable: report on the upper row
                else
                    out.multipliers(c) = lam;
            }
        }
        return out;
    }

private:
    QpSettings settings_;

    static void factor_working_set(const Matrix& Aw, Matrix& Y, Matrix& Z, Matrix& R)
    {
        const Index d = Aw.rows();
        const Index k = Aw.cols();
        if (k == 0) {
            Y = Matrix(d, 0);
            Z = Matrix::Identity(d, d);
            R = Matrix(0, 0);
            return;
        }
        Eigen::HouseholderQR<Matrix> qr(Aw);
        const Matrix Q = qr.householderQ() * Matrix::Identity(d, d);
        Y = Q.leftCols(k);
        Z = Q.rightCols(d - k);
        R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    }

    /// Step for a singular reduced Hessian: Newton on the curved part, and
    /// steepest descent along zero-curvature directions if the gradient has
    /// a component there (then the step is a ray limited by the ratio test).
    static Vector semidefinite_step(const Matrix& Hz, const Matrix& Z, const Vector& rg, bool& ray)
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(Hz);
        const Vector& ev = es.eigenvalues();
        const Matrix& V = es.eigenvectors();
        const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
        const Vector c = V.transpose() * rg;
        Vector flat = Vector::Zero(rg.size());
        Vector curved = Vector::Zero(rg.size());
        for (Index i = 0; i < ev.size(); ++i) {
            if (ev(i) > tol)
                curved -= (c(i) / ev(i)) * V.col(i);
            else if (std::abs(c(i)) > 1e-14)
                flat -= c(i) * V.col(i);
        }
        if (flat.norm() > 0.0) {
            ray = true;
            return Z * flat;
        }
        return Z * curved;
    }

    std::vector<int> initial_working_set(const detail::ConstraintView& cv, const Vector& x,
                                         const std::vector<int>& candidates) const
    {
        const Index d = cv.d;
        std::vector<int> working;
        Matrix basis(d, 0);
        auto try_add = [&](int c) {
            if (c < 0 || c >= cv.count()) return;
            if (!cv.finite(c) || cv.redundant(c)) return;
            if (std::find(working.begin(), working.end(), c) != working.end()) return;
            const double res = cv.dot(c, x) - cv.rhs(c);
            const double scale = 1.0 + std::abs(cv.rhs(c));
            if (std::abs(res) > 1e-10 * scale) return;
            if (static_cast<Index>(working.size()) >= d) return;
            Vector a = cv.row(c);
            Vector r = a;
            if (basis.cols() > 0) r -= basis * (basis.transpose() * a);
            if (r.norm() <= 1e-9 * a.norm()) return;
            basis.conservativeResize(d, basis.cols() + 1);
            basis.col(basis.cols() - 1) = r.normalized();
            working.push_back(c);
        };
        // Equalities first so they are always present.
        for (Index c = 0; c < d; ++c)
            if (cv.equality(c)) try_add(static_cast<int>(c));
        for (int c : candidates) try_add(c);
        return working;
    }

    /// Phase one: min t + rho/2 |u - u0|^2  s.t.  a_c u - t <= b_c (rows normalised), box.
    std::optional<Vector> find_feasible_point(const QpProblem& p, const Vector& start, int& iterations) const
    {
        const Index d = p.dim();
        const Index q = p.num_ineq();
        const double rho = 1e-6;
        QpProblem aux;
        aux.H = Matrix::Zero(d + 1, d + 1);
        aux.H.diagonal().setConstant(rho);
        aux.g = Vector::Zero(d + 1);
        aux.g.head(d) = -rho * start;
        aux.g(d) = 1.0;
        aux.A_ineq = Matrix::Zero(q, d + 1);
        aux.b_ineq = Vector::Zero(q);
        double t0 = 0.0;
        for (Index i = 0; i < q; ++i) {
            const double nrm = std::max(p.A_ineq.row(i).norm(), 1e-300);
            aux.A_ineq.row(i).head(d) = p.A_ineq.row(i) / nrm;
            aux.A_ineq(i, d) = -1.0;
            aux.b_ineq(i) = p.b_ineq(i) / nrm;
            t0 = std::max(t0, aux.A_ineq.row(i).head(d).dot(start) - aux.b_ineq(i));
        }
        aux.lb = Vector(d + 1);
        aux.ub = Vector(d + 1);
        aux.lb.head(d) = p.lb;
        aux.ub.head(d) = p.ub;
        aux.lb(d) = 0.0;
        aux.ub(d) = std::numeric_limits<double>::infinity();

        QpSolution seed;
        seed.u_star = Vector(d + 1);
        seed.u_star.head(d) = start;
        seed.u_star(d) = t0;
        QpSettings s = settings_;
        s.jitter_factor = 0.0;
        ActiveSetQpSolver inner(s);
        const QpSolution sol = inner.solve(aux, &seed);
        iterations = sol.iterations;
        if (sol.status != QpStatus::optimal) return std::nullopt;
        Vector x = sol.u_star.head(d);
        detail::ConstraintView cv(p);
        if (cv.violation(x) > 1e-8) return std::nullopt;
        // Snap tiny residual violations onto the feasible side of the bounds.
        for (Index j = 0; j < d; ++j) x(j) = std::clamp(x(j), p.lb(j), p.ub(j));
        return x;
    }
};

inline QpSolution solve_qp(const QpProblem& p, const QpSolution* warm = nullptr, QpSettings settings = {})
{
    return ActiveSetQpSolver(settings).solve(p, warm);
}

}  // namespace pelletmpc
