#include "unimatch/autodiff.hpp"
#include "unimatch/error.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <sstream>

namespace unimatch::ad {

const Mat& Var::value() const
{
    return m_tape->value(m_id);
}

Mat Var::grad() const
{
    const Mat& g = m_tape->grad(m_id);
    if (g.size() == 0) return Mat::Zero(rows(), cols());
    return g;
}

Var Tape::constant(Mat value)
{
    m_nodes.push_back(Node{std::move(value), Mat(), false, nullptr});
    return Var(this, static_cast<int>(m_nodes.size() - 1));
}

Var Tape::variable(Mat value)
{
    m_nodes.push_back(Node{std::move(value), Mat(), true, nullptr});
    return Var(this, static_cast<int>(m_nodes.size() - 1));
}

Var Tape::record(Mat value, const std::vector<Var>& parents, Backward backward)
{
    bool needs = false;
    for (const auto& p : parents) needs = needs || requires_grad(p.id());
    m_nodes.push_back(Node{std::move(value), Mat(), needs, needs ? std::move(backward) : nullptr});
    return Var(this, static_cast<int>(m_nodes.size() - 1));
}

void Tape::backward(const Var& root)
{
    if (root.rows() != 1 || root.cols() != 1) {
        throw Error(ErrorCode::ShapeMismatch, "backward needs a 1x1 root");
    }
    zero_grad();
    if (!requires_grad(root.id())) return;
    m_nodes[static_cast<size_t>(root.id())].grad = Mat::Ones(1, 1);
    for (int id = root.id(); id >= 0; --id) {
        auto& node = m_nodes[static_cast<size_t>(id)];
        if (node.backward && node.grad.size() != 0) node.backward(*this, id);
    }
}

void Tape::zero_grad()
{
    for (auto& node : m_nodes) node.grad.resize(0, 0);
}

namespace {

[[noreturn]] void shape_fail(const char* op, const Var& a, const Var& b)
{
    std::ostringstream msg;
    msg << op << ": " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x" << b.cols();
    throw Error(ErrorCode::ShapeMismatch, msg.str());
}

void require_same_tape(const Var& a, const Var& b)
{
    if (a.tape() != b.tape()) throw Error(ErrorCode::ShapeMismatch, "operands live on different tapes");
}

void require_same_shape(const char* op, const Var& a, const Var& b)
{
    require_same_tape(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(op, a, b);
}

double softplus_scalar(double x)
{
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

double sigmoid_scalar(double x)
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

} // namespace

Var matmul(const Var& a, const Var& b)
{
    require_same_tape(a, b);
    if (a.cols() != b.rows()) shape_fail("matmul", a, b);
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
        const Mat& g = t.grad(self);
        if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
        if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
    });
}

Var transpose(const Var& a)
{
    const int ia = a.id();
    return a.tape()->record(a.value().transpose(), {a}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.grad(self).transpose());
    });
}

Var add(const Var& a, const Var& b)
{
    require_same_shape("add", a, b);
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
        t.accumulate(ia, t.grad(self));
        t.accumulate(ib, t.grad(self));
    });
}

Var sub(const Var& a, const Var& b)
{
    require_same_shape("sub", a, b);
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
        t.accumulate(ia, t.grad(self));
        t.accumulate(ib, -t.grad(self));
    });
}

Var hadamard(const Var& a, const Var& b)
{
    require_same_shape("hadamard", a, b);
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
        const Mat& g = t.grad(self);
        if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
        if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
    });
}

Var scale(const Var& a, double s)
{
    const int ia = a.id();
    return a.tape()->record(a.value() * s, {a}, [ia, s](Tape& t, int self) {
        t.accumulate(ia, t.grad(self) * s);
    });
}

Var add_row(const Var& a, const Var& row)
{
    require_same_tape(a, row);
    if (row.rows() != 1 || row.cols() != a.cols()) shape_fail("add_row", a, row);
    const int ia = a.id();
    const int ir = row.id();
    Mat out = a.value().rowwise() + row.value().row(0);
    return a.tape()->record(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
        t.accumulate(ia, t.grad(self));
        if (t.requires_grad(ir)) t.accumulate(ir, t.grad(self).colwise().sum());
    });
}

Var exp(const Var& a)
{
    const int ia = a.id();
    return a.tape()->record(a.value().array().exp().matrix(), {a}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
    });
}

Var log(const Var& a)
{
    const int ia = a.id();
    return a.tape()->record(a.value().array().log().matrix(), {a}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
    });
}

Var gelu(const Var& a)
{
    const int ia = a.id();
    Mat out = a.value().unaryExpr([](double x) {
        return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    });
    return a.tape()->record(std::move(out), {a}, [ia](Tape& t, int self) {
        Mat d = t.value(ia).unaryExpr([](double x) {
            const double u = kGeluC * (x + kGeluA * x * x * x);
            const double th = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
        });
        t.accumulate(ia, t.grad(self).cwiseProduct(d));
    });
}

Var softplus(const Var& a)
{
    const int ia = a.id();
    return a.tape()->record(a.value().unaryExpr(&softplus_scalar), {a}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.grad(self).cwiseProduct(t.value(ia).unaryExpr(&sigmoid_scalar)));
    });
}

Var sum(const Var& a)
{
    const int ia = a.id();
    const Index r = a.rows();
    const Index c = a.cols();
    return a.tape()->record(Mat::Constant(1, 1, a.value().sum()), {a}, [ia, r, c](Tape& t, int self) {
        t.accumulate(ia, Mat::Constant(r, c, t.grad(self)(0, 0)));
    });
}

Var mean(const Var& a)
{
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var sum_squares(const Var& a)
{
    const int ia = a.id();
    return a.tape()->record(Mat::Constant(1, 1, a.value().squaredNorm()), {a}, [ia](Tape& t, int self) {
        t.accumulate(ia, (2.0 * t.grad(self)(0, 0)) * t.value(ia));
    });
}

Var row_softmax(const Var& a)
{
    const int ia = a.id();
    const Mat& x = a.value();
    Mat y(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        y.row(i) = (x.row(i).array() - m).exp().matrix();
        y.row(i) /= y.row(i).sum();
    }
    return a.tape()->record(std::move(y), {a}, [ia](Tape& t, int self) {
        const Mat& g = t.grad(self);
        const Mat& y = t.value(self);
        Vec dots = g.cwiseProduct(y).rowwise().sum();
        t.accumulate(ia, y.cwiseProduct(g - dots.replicate(1, g.cols())));
    });
}

Var row_logsumexp(const Var& a)
{
    const int ia = a.id();
    const Mat& x = a.value();
    Mat out(x.rows(), 1);
    for (Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        out(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
    }
    return a.tape()->record(std::move(out), {a}, [ia](Tape& t, int self) {
        const Mat& x = t.value(ia);
        const Mat& lse = t.value(self);
        const Mat& g = t.grad(self);
        Mat d(x.rows(), x.cols());
        for (Index i = 0; i < x.rows(); ++i) d.row(i) = g(i, 0) * (x.row(i).array() - lse(i, 0)).exp().matrix();
        t.accumulate(ia, d);
    });
}

Var row_normalize(const Var& a)
{
    const int ia = a.id();
    const Mat& x = a.value();
    Vec norms = x.rowwise().norm();
    for (Index i = 0; i < norms.size(); ++i) {
        if (!(norms[i] >= 1e-12)) {
            throw Error(ErrorCode::ZeroVector, "row " + std::to_string(i) + " has norm below 1e-12");
        }
    }
    Mat y = norms.cwiseInverse().asDiagonal() * x;
    return a.tape()->record(std::move(y), {a}, [ia, norms](Tape& t, int self) {
        const Mat& g = t.grad(self);
        const Mat& y = t.value(self);
        Vec dots = g.cwiseProduct(y).rowwise().sum();
        t.accumulate(ia, norms.cwiseInverse().asDiagonal() * (g - dots.asDiagonal() * y));
    });
}

Var cosine_similarity(const Var& a, const Var& b)
{
    if (a.cols() != b.cols()) shape_fail("cosine_similarity", a, b);
    return matmul(row_normalize(a), transpose(row_normalize(b)));
}

Var gather_rows(const Var& a, const std::vector<int>& rows)
{
    const int ia = a.id();
    const Index n = a.rows();
    Mat out(static_cast<Index>(rows.size()), a.cols());
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] >= n) throw Error(ErrorCode::IndexError, "gather_rows index out of range");
        out.row(static_cast<Index>(r)) = a.value().row(rows[r]);
    }
    return a.tape()->record(std::move(out), {a}, [ia, rows, n](Tape& t, int self) {
        const Mat& g = t.grad(self);
        Mat d = Mat::Zero(n, g.cols());
        for (size_t r = 0; r < rows.size(); ++r) d.row(rows[r]) += g.row(static_cast<Index>(r));
        t.accumulate(ia, d);
    });
}

Var segment_logsumexp(const Var& a, const std::vector<int>& segment, int n_segments)
{
    const Mat& x = a.value();
    if (static_cast<Index>(segment.size()) != x.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "segment_logsumexp: one segment id per column required");
    }
    std::vector<int> counts(static_cast<size_t>(n_segments), 0);
    for (int s : segment) {
        if (s < 0 || s >= n_segments) throw Error(ErrorCode::IndexError, "segment id out of range");
        ++counts[static_cast<size_t>(s)];
    }
    for (int s = 0; s < n_segments; ++s) {
        if (counts[static_cast<size_t>(s)] == 0) {
            throw Error(ErrorCode::EmptyGroup, "group " + std::to_string(s) + " has no members");
        }
    }

    const Index rows = x.rows();
    Mat maxes = Mat::Constant(rows, n_segments, -std::numeric_limits<double>::infinity());
    for (Index l = 0; l < x.cols(); ++l) {
        const int s = segment[static_cast<size_t>(l)];
        maxes.col(s) = maxes.col(s).cwiseMax(x.col(l));
    }
    Mat sums = Mat::Zero(rows, n_segments);
    for (Index l = 0; l < x.cols(); ++l) {
        const int s = segment[static_cast<size_t>(l)];
        sums.col(s).array() += (x.col(l) - maxes.col(s)).array().exp();
    }
    Mat out = maxes + sums.array().log().matrix();

    const int ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia, segment](Tape& t, int self) {
        const Mat& x = t.value(ia);
        const Mat& lse = t.value(self);
        const Mat& g = t.grad(self);
        Mat d(x.rows(), x.cols());
        for (Index l = 0; l < x.cols(); ++l) {
            const int s = segment[static_cast<size_t>(l)];
            d.col(l) = g.col(s).cwiseProduct((x.col(l) - lse.col(s)).array().exp().matrix());
        }
        t.accumulate(ia, d);
    });
}

Var group_nll(const Var& a, std::vector<GroupTerm> terms)
{
    const Mat& x = a.value();
    double total = 0.0;
    for (const auto& term : terms) {
        if (term.row < 0 || term.row >= x.rows() || term.reference < 0 || term.reference >= x.cols()) {
            throw Error(ErrorCode::IndexError, "group_nll term out of range");
        }
        if (term.negatives.empty()) throw Error(ErrorCode::EmptyGroup, "group_nll term without negatives");
        double m = -std::numeric_limits<double>::infinity();
        for (int g : term.negatives) m = std::max(m, x(term.row, g));
        double s = 0.0;
        for (int g : term.negatives) s += std::exp(x(term.row, g) - m);
        total += term.weight * (m + std::log(s) - x(term.row, term.reference));
    }

    const int ia = a.id();
    return a.tape()->record(Mat::Constant(1, 1, total), {a}, [ia, terms = std::move(terms)](Tape& t, int self) {
        const Mat& x = t.value(ia);
        const double up = t.grad(self)(0, 0);
        Mat d = Mat::Zero(x.rows(), x.cols());
        for (const auto& term : terms) {
            double m = -std::numeric_limits<double>::infinity();
            for (int g : term.negatives) m = std::max(m, x(term.row, g));
            double s = 0.0;
            for (int g : term.negatives) s += std::exp(x(term.row, g) - m);
            const double w = up * term.weight;
            for (int g : term.negatives) d(term.row, g) += w * std::exp(x(term.row, g) - m) / s;
            d(term.row, term.reference) -= w;
        }
        t.accumulate(ia, d);
    });
}

Var fmap_solve(const Var& Ax, const Var& Ay, const Vec& lambda_x, const Vec& lambda_y, double mu)
{
    require_same_tape(Ax, Ay);
    const Index kx = Ax.rows();
    const Index ky = Ay.rows();
    if (Ax.cols() != Ay.cols()) shape_fail("fmap_solve", Ax, Ay);
    if (lambda_x.size() != kx || lambda_y.size() != ky) {
        throw Error(ErrorCode::ShapeMismatch, "fmap_solve: spectra sizes must match coefficient rows");
    }

    const Mat& X = Ax.value();
    const Mat& Y = Ay.value();
    const Mat G = X * X.transpose();
    const Mat B = Y * X.transpose();

    std::vector<Eigen::LLT<Mat>> factors;
    factors.reserve(static_cast<size_t>(ky));
    Mat C(ky, kx);
    for (Index p = 0; p < ky; ++p) {
        Mat A = G;
        A.diagonal() += mu * (lambda_y[p] - lambda_x.array()).square().matrix();
        Eigen::LLT<Mat> llt(A);
        if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
            throw Error(ErrorCode::SingularSystem,
                "functional map system for row " + std::to_string(p) + " is singular (rank-deficient descriptors)");
        }
        C.row(p) = llt.solve(B.row(p).transpose()).transpose();
        factors.push_back(std::move(llt));
    }

    const int ix = Ax.id();
    const int iy = Ay.id();
    return Ax.tape()->record(C, {Ax, Ay}, [ix, iy, factors = std::move(factors)](Tape& t, int self) {
        const Mat& X = t.value(ix);
        const Mat& Y = t.value(iy);
        const Mat& C = t.value(self);
        const Mat& g = t.grad(self);
        Mat U(C.rows(), C.cols());
        for (Index p = 0; p < C.rows(); ++p) {
            U.row(p) = factors[static_cast<size_t>(p)].solve(g.row(p).transpose()).transpose();
        }
        // dG = -sum_p u_p c_p^T, dB = U.
        Mat dG = -(U.transpose() * C);
        if (t.requires_grad(ix)) t.accumulate(ix, (dG + dG.transpose()) * X + U.transpose() * Y);
        if (t.requires_grad(iy)) t.accumulate(iy, U * X);
    });
}

} // namespace unimatch::ad
