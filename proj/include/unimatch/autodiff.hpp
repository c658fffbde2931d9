#pragma once

#include "unimatch/types.hpp"

#include <functional>
#include <vector>

namespace unimatch::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var
{
public:
    Var() = default;
    Var(Tape* tape, int id)
        : m_tape(tape)
        , m_id(id)
    {}

    const Mat& value() const;
    /// Gradient after Tape::backward; zero matrix if nothing flowed here.
    Mat grad() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    double scalar() const { return value()(0, 0); }

    Tape* tape() const { return m_tape; }
    int id() const { return m_id; }
    bool valid() const { return m_tape != nullptr; }

private:
    Tape* m_tape = nullptr;
    int m_id = -1;
};

/// Linear record of dense-matrix operations. Reverse sweep visits nodes in
/// reverse creation order; gradients accumulate additively across fan-out.
class Tape
{
public:
    using Backward = std::function<void(Tape&, int self)>;

    Var constant(Mat value);
    Var variable(Mat value);

    /// Appends a node whose gradient is pushed to its parents by `backward`.
    /// The node only tracks gradients if one of `parents` does.
    Var record(Mat value, const std::vector<Var>& parents, Backward backward);

    void backward(const Var& root);
    void zero_grad();

    const Mat& value(int id) const { return m_nodes[static_cast<size_t>(id)].value; }
    const Mat& grad(int id) const { return m_nodes[static_cast<size_t>(id)].grad; }
    bool requires_grad(int id) const { return m_nodes[static_cast<size_t>(id)].requires_grad; }

    /// grad(id) += delta, allocating on first use. No-op for constants.
    template <typename Derived>
    void accumulate(int id, const Eigen::MatrixBase<Derived>& delta)
    {
        auto& node = m_nodes[static_cast<size_t>(id)];
        if (!node.requires_grad) return;
        if (node.grad.size() == 0) {
            node.grad = delta;
        } else {
            node.grad += delta;
        }
    }

    size_t size() const { return m_nodes.size(); }

private:
    struct Node
    {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        Backward backward;
    };

    std::vector<Node> m_nodes;
};

// Primitives. Every op checks shapes and throws Error(ShapeMismatch).

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// a (n x c) + row (1 x c) broadcast over rows.
Var add_row(const Var& a, const Var& row);
Var exp(const Var& a);
Var log(const Var& a);
/// tanh-form GELU.
Var gelu(const Var& a);
Var softplus(const Var& a);
/// 1x1 sums.
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_squares(const Var& a);
Var row_softmax(const Var& a);
/// n x 1 row-wise log-sum-exp (max-shifted).
Var row_logsumexp(const Var& a);
/// Rows scaled to unit L2 norm; throws ZeroVector for rows with norm < 1e-12.
Var row_normalize(const Var& a);
/// cos(a_i, b_j) for all row pairs.
Var cosine_similarity(const Var& a, const Var& b);
Var gather_rows(const Var& a, const std::vector<int>& rows);

/// out(i, g) = logsumexp over columns l with segment[l] == g of a(i, l).
/// Throws EmptyGroup for a segment without columns.
Var segment_logsumexp(const Var& a, const std::vector<int>& segment, int n_segments);

/// One grouped negative log-likelihood term: weight * (lse over `negatives`
/// of a(row, .) - a(row, reference)).
struct GroupTerm
{
    int row = 0;
    int reference = 0;
    std::vector<int> negatives;
    double weight = 1.0;
};

/// 1x1 sum of GroupTerm values over the rows of a (anchors x groups) matrix.
Var group_nll(const Var& a, std::vector<GroupTerm> terms);

/// Closed-form regularized functional map (k_y x k_x): row p minimizes
/// |c_p Ax - Ay_p|^2 + mu * sum_q (lambda_y[p] - lambda_x[q])^2 c_pq^2.
/// Differentiable in Ax and Ay. Throws SingularSystem.
Var fmap_solve(const Var& Ax, const Var& Ay, const Vec& lambda_x, const Vec& lambda_y, double mu);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

} // namespace unimatch::ad
