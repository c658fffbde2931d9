#include "unimatch/cosegment.hpp"
#include "unimatch/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <tuple>

namespace unimatch {

std::vector<int> connected_average_linkage(const Mat& features, const std::vector<std::vector<int>>& adjacency, int k)
{
    const int n = static_cast<int>(features.rows());
    if (static_cast<int>(adjacency.size()) != n) throw Error(ErrorCode::ShapeMismatch, "adjacency size differs from rows");
    if (k < 1 || k > n) {
        throw Error(ErrorCode::KTooLarge, "cannot form " + std::to_string(k) + " clusters from " + std::to_string(n) + " points");
    }

    // Cluster ids: 0..n-1 are points, merges get n, n+1, ...
    std::vector<std::map<int, double>> links(static_cast<size_t>(2 * n));
    std::vector<int> size(static_cast<size_t>(2 * n), 1);
    std::vector<int> parent(static_cast<size_t>(2 * n), -1);
    std::vector<bool> active(static_cast<size_t>(2 * n), false);
    using Entry = std::tuple<double, int, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

    for (int v = 0; v < n; ++v) {
        active[static_cast<size_t>(v)] = true;
        for (int w : adjacency[static_cast<size_t>(v)]) {
            if (w == v) continue;
            const double d = (features.row(v) - features.row(w)).norm();
            links[static_cast<size_t>(v)][w] = d;
            if (v < w) heap.emplace(d, v, w);
        }
    }

    int clusters = n;
    int next = n;
    while (clusters > k) {
        if (heap.empty()) {
            throw Error(ErrorCode::KTooLarge,
                "connectivity stops at " + std::to_string(clusters) + " clusters, cannot reach " + std::to_string(k));
        }
        const auto [d, a, b] = heap.top();
        heap.pop();
        if (!active[static_cast<size_t>(a)] || !active[static_cast<size_t>(b)]) continue;

        const int c = next++;
        active[static_cast<size_t>(a)] = active[static_cast<size_t>(b)] = false;
        active[static_cast<size_t>(c)] = true;
        parent[static_cast<size_t>(a)] = parent[static_cast<size_t>(b)] = c;
        const double na = size[static_cast<size_t>(a)];
        const double nb = size[static_cast<size_t>(b)];
        size[static_cast<size_t>(c)] = static_cast<int>(na + nb);

        auto& merged = links[static_cast<size_t>(c)];
        for (const auto& [w, dist] : links[static_cast<size_t>(a)]) {
            if (active[static_cast<size_t>(w)]) merged[w] = dist;
        }
        for (const auto& [w, dist] : links[static_cast<size_t>(b)]) {
            if (!active[static_cast<size_t>(w)]) continue;
            auto it = merged.find(w);
            if (it == merged.end()) {
                merged[w] = dist;
            } else {
                it->second = (na * it->second + nb * dist) / (na + nb);
            }
        }
        links[static_cast<size_t>(a)].clear();
        links[static_cast<size_t>(b)].clear();
        for (const auto& [w, dist] : merged) {
            auto& lw = links[static_cast<size_t>(w)];
            lw.erase(a);
            lw.erase(b);
            lw[c] = dist;
            heap.emplace(dist, std::min(w, c), std::max(w, c));
        }
        --clusters;
    }

    // Root of each point, then labels ordered by smallest member.
    std::vector<int> root(static_cast<size_t>(n));
    for (int v = 0; v < n; ++v) {
        int r = v;
        while (parent[static_cast<size_t>(r)] >= 0) r = parent[static_cast<size_t>(r)];
        root[static_cast<size_t>(v)] = r;
    }
    std::map<int, int> label_of_root;
    std::vector<int> labels(static_cast<size_t>(n));
    for (int v = 0; v < n; ++v) {
        auto [it, inserted] = label_of_root.try_emplace(root[static_cast<size_t>(v)], static_cast<int>(label_of_root.size()));
        labels[static_cast<size_t>(v)] = it->second;
    }
    return labels;
}

Mat label_centroids(const Mat& features, const std::vector<int>& labels, int k)
{
    Mat c = Mat::Zero(k, features.cols());
    std::vector<int> count(static_cast<size_t>(k), 0);
    for (size_t v = 0; v < labels.size(); ++v) {
        c.row(labels[v]) += features.row(static_cast<Index>(v));
        ++count[static_cast<size_t>(labels[v])];
    }
    for (int i = 0; i < k; ++i) {
        if (count[static_cast<size_t>(i)] > 0) c.row(i) /= count[static_cast<size_t>(i)];
    }
    return c;
}

std::vector<int> kmeans(const Mat& features, Mat centroids, const KMeansOptions& options)
{
    const Index n = features.rows();
    const Index k = centroids.rows();
    if (features.cols() != centroids.cols()) throw Error(ErrorCode::DimMismatch, "centroid width differs from features");
    if (k < 1 || k > n) throw Error(ErrorCode::KTooLarge, "more clusters than points");

    std::vector<int> labels(static_cast<size_t>(n), 0);
    Vec best(n);
    auto assign = [&] {
        for (Index v = 0; v < n; ++v) {
            double d_best = std::numeric_limits<double>::infinity();
            int c_best = 0;
            for (Index c = 0; c < k; ++c) {
                const double d = (features.row(v) - centroids.row(c)).squaredNorm();
                if (d < d_best) {
                    d_best = d;
                    c_best = static_cast<int>(c);
                }
            }
            labels[static_cast<size_t>(v)] = c_best;
            best[v] = d_best;
        }
    };

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        assign();
        Mat updated = Mat::Zero(k, features.cols());
        std::vector<int> count(static_cast<size_t>(k), 0);
        for (Index v = 0; v < n; ++v) {
            updated.row(labels[static_cast<size_t>(v)]) += features.row(v);
            ++count[static_cast<size_t>(labels[static_cast<size_t>(v)])];
        }
        for (Index c = 0; c < k; ++c) {
            if (count[static_cast<size_t>(c)] > 0) {
                updated.row(c) /= count[static_cast<size_t>(c)];
                continue;
            }
            Index far = 0;
            for (Index v = 1; v < n; ++v) {
                if (best[v] > best[far]) far = v;
            }
            updated.row(c) = features.row(far);
            best[far] = 0.0;
        }
        const double shift = (updated - centroids).rowwise().norm().maxCoeff();
        centroids = std::move(updated);
        if (shift < options.tolerance) break;
    }
    assign();
    return labels;
}

CosegResult cosegment(const Mat& f_anchor, const TriangleMesh& anchor_mesh, const Mat& f_target, int k)
{
    if (f_anchor.rows() != anchor_mesh.n_vertices()) throw Error(ErrorCode::ShapeMismatch, "anchor features do not match the mesh");
    if (f_anchor.cols() != f_target.cols()) throw Error(ErrorCode::DimMismatch, "anchor and target feature widths differ");
    CosegResult out;
    out.anchor = connected_average_linkage(f_anchor, vertex_adjacency(anchor_mesh), k);
    if (k > f_target.rows()) throw Error(ErrorCode::KTooLarge, "more clusters than target vertices");
    out.target = kmeans(f_target, label_centroids(f_anchor, out.anchor, k));
    return out;
}

namespace {

struct Contingency
{
    std::vector<std::vector<double>> table;
    std::vector<double> rows;
    std::vector<double> cols;
    double n = 0.0;
};

Contingency contingency(const std::vector<int>& a, const std::vector<int>& b)
{
    if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "label vectors differ in length");
    std::map<int, int> ia;
    std::map<int, int> ib;
    for (int x : a) ia.try_emplace(x, static_cast<int>(ia.size()));
    for (int x : b) ib.try_emplace(x, static_cast<int>(ib.size()));
    Contingency c;
    c.table.assign(ia.size(), std::vector<double>(ib.size(), 0.0));
    c.rows.assign(ia.size(), 0.0);
    c.cols.assign(ib.size(), 0.0);
    for (size_t i = 0; i < a.size(); ++i) {
        const int r = ia[a[i]];
        const int s = ib[b[i]];
        c.table[static_cast<size_t>(r)][static_cast<size_t>(s)] += 1.0;
        c.rows[static_cast<size_t>(r)] += 1.0;
        c.cols[static_cast<size_t>(s)] += 1.0;
    }
    c.n = static_cast<double>(a.size());
    return c;
}

double entropy(const std::vector<double>& counts, double n)
{
    double h = 0.0;
    for (double c : counts) {
        if (c > 0) h -= (c / n) * std::log(c / n);
    }
    return h;
}

} // namespace

double adjusted_mutual_information(const std::vector<int>& a, const std::vector<int>& b)
{
    const Contingency c = contingency(a, b);
    const size_t R = c.rows.size();
    const size_t S = c.cols.size();
    if ((R == 1 && S == 1) || (R == 0 && S == 0) || (R == a.size() && S == a.size())) return 1.0;
    const double N = c.n;

    double mi = 0.0;
    for (size_t i = 0; i < R; ++i) {
        for (size_t j = 0; j < S; ++j) {
            const double nij = c.table[i][j];
            if (nij > 0) mi += (nij / N) * std::log(N * nij / (c.rows[i] * c.cols[j]));
        }
    }

    // Expected mutual information under the hypergeometric model.
    double emi = 0.0;
    const double lg_n = std::lgamma(N + 1);
    for (size_t i = 0; i < R; ++i) {
        const double ai = c.rows[i];
        for (size_t j = 0; j < S; ++j) {
            const double bj = c.cols[j];
            const double lo = std::max(1.0, ai + bj - N);
            const double hi = std::min(ai, bj);
            const double base = std::lgamma(ai + 1) + std::lgamma(bj + 1) + std::lgamma(N - ai + 1) +
                                std::lgamma(N - bj + 1) - lg_n;
            for (double nij = lo; nij <= hi; nij += 1.0) {
                const double log_p = base - std::lgamma(nij + 1) - std::lgamma(ai - nij + 1) -
                                     std::lgamma(bj - nij + 1) - std::lgamma(N - ai - bj + nij + 1);
                emi += (nij / N) * std::log(N * nij / (ai * bj)) * std::exp(log_p);
            }
        }
    }

    const double normalizer = 0.5 * (entropy(c.rows, N) + entropy(c.cols, N));
    double denominator = normalizer - emi;
    const double eps = std::numeric_limits<double>::epsilon();
    denominator = denominator < 0 ? std::min(denominator, -eps) : std::max(denominator, eps);
    return (mi - emi) / denominator;
}

double aligned_agreement(const std::vector<int>& predicted, const std::vector<int>& truth)
{
    const Contingency c = contingency(predicted, truth);
    const size_t n = std::max(c.rows.size(), c.cols.size());
    if (n == 0) return 1.0;

    // Hungarian algorithm (minimization of -overlap) on a padded square table.
    std::vector<std::vector<double>> cost(n + 1, std::vector<double>(n + 1, 0.0));
    for (size_t i = 0; i < c.rows.size(); ++i) {
        for (size_t j = 0; j < c.cols.size(); ++j) cost[i + 1][j + 1] = -c.table[i][j];
    }
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<bool> used(n + 1);
    for (size_t i = 1; i <= n; ++i) {
        p[0] = i;
        size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), false);
        do {
            used[j0] = true;
            const size_t i0 = p[j0];
            double delta = inf;
            size_t j1 = 0;
            for (size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0][j] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double matched = 0.0;
    for (size_t j = 1; j <= n; ++j) matched -= cost[p[j]][j];
    return matched / c.n;
}

} // namespace unimatch
