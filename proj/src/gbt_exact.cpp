#include "gbt_internal.hpp"

#include <algorithm>
#include <numeric>

namespace merchcast::learners {

GradHess loss_grad_hess(double y, double pred) { return {pred - y, 1.0}; }

int RegressionTree::leaf_of(const double* row) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
        const auto& node = nodes[static_cast<std::size_t>(k)];
        k = row[node.feature] <= node.threshold ? node.left : node.right;
    }
    return k;
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& node) { return node.feature < 0; }));
}

namespace {

// Greedy search over every distinct feature value present in a node. Rows
// are presorted once per feature; each node filters the presorted order.
class ExactGrower {
public:
    ExactGrower(const RowMatrix& x, const GbtParams& params) : x_(x), params_(params) {
        const auto n = static_cast<std::size_t>(x.rows());
        in_node_.assign(n, 0);
        sorted_.resize(static_cast<std::size_t>(x.cols()));
        for (Eigen::Index f = 0; f < x.cols(); ++f) {
            auto& order = sorted_[static_cast<std::size_t>(f)];
            order.resize(n);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
        }
    }

    RegressionTree grow(const std::vector<double>& g, const std::vector<double>& h) {
        g_ = &g;
        h_ = &h;
        tree_ = RegressionTree{};
        std::vector<int> rows(g.size());
        std::iota(rows.begin(), rows.end(), 0);
        build(rows, 0);
        return std::move(tree_);
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double gain = 0.0;
    };

    int build(const std::vector<int>& rows, int depth) {
        const auto& g = *g_;
        const auto& h = *h_;
        double sum_g = 0.0;
        double sum_h = 0.0;
        for (int r : rows) {
            sum_g += g[static_cast<std::size_t>(r)];
            sum_h += h[static_cast<std::size_t>(r)];
        }
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back(TreeNode{-1, 0.0, -1, -1, detail::leaf_weight(sum_g, sum_h, params_.lambda_reg)});
        if (depth >= params_.max_depth || rows.size() < 2) return id;

        const Split best = find_split(rows, sum_g, sum_h);
        if (best.feature < 0) return id;

        std::vector<int> left;
        std::vector<int> right;
        for (int r : rows) (x_(r, best.feature) <= best.threshold ? left : right).push_back(r);
        const int l = build(left, depth + 1);
        const int rt = build(right, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.left = l;
        node.right = rt;
        return id;
    }

    Split find_split(const std::vector<int>& rows, double sum_g, double sum_h) {
        const auto& g = *g_;
        const auto& h = *h_;
        for (int r : rows) in_node_[static_cast<std::size_t>(r)] = 1;

        Split best;
        const std::size_t count = rows.size();
        std::vector<int> node_order;
        node_order.reserve(count);
        for (Eigen::Index f = 0; f < x_.cols(); ++f) {
            node_order.clear();
            for (int r : sorted_[static_cast<std::size_t>(f)])
                if (in_node_[static_cast<std::size_t>(r)]) node_order.push_back(r);

            double gl = 0.0;
            double hl = 0.0;
            std::size_t nl = 0;
            std::size_t i = 0;
            while (i < count) {
                // Sum one run of equal values first: a split may not separate them.
                const double value = x_(node_order[i], f);
                double run_g = 0.0;
                double run_h = 0.0;
                std::size_t j = i;
                for (; j < count && x_(node_order[j], f) == value; ++j) {
                    run_g += g[static_cast<std::size_t>(node_order[j])];
                    run_h += h[static_cast<std::size_t>(node_order[j])];
                }
                gl += run_g;
                hl += run_h;
                nl += j - i;
                i = j;
                if (nl == count) break;

                const double gr = sum_g - gl;
                const double hr = sum_h - hl;
                if (hl < params_.min_child_hessian || hr < params_.min_child_hessian) continue;
                const double gain = detail::split_gain(gl, hl, gr, hr, params_.lambda_reg, params_.gamma_split);
                if (gain > best.gain) best = Split{static_cast<int>(f), value, gain};
            }
        }

        for (int r : rows) in_node_[static_cast<std::size_t>(r)] = 0;
        return best;
    }

    const RowMatrix& x_;
    GbtParams params_;
    std::vector<std::vector<int>> sorted_;
    std::vector<char> in_node_;
    const std::vector<double>* g_ = nullptr;
    const std::vector<double>* h_ = nullptr;
    RegressionTree tree_;
};

}  // namespace

GbtModel fit_gbt_exact(const FeatureMatrix& x, const Eigen::VectorXd& y, const GbtParams& params) {
    detail::validate(params);
    ExactGrower grower(x.rows, params);
    return detail::boost(x, y, params, GbtMode::Exact,
                         [&](const std::vector<double>& g, const std::vector<double>& h, int) { return grower.grow(g, h); });
}

}  // namespace merchcast::learners
