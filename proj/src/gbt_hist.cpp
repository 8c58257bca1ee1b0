#include "gbt_internal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace merchcast::learners {

// --- binning -----------------------------------------------------------------

HistogramBinMap HistogramBinMap::build(const RowMatrix& x, int max_bins) {
    if (max_bins < 2) throw Error(ErrorCode::InvalidParams, "learners", "max_bins must be >= 2");
    HistogramBinMap map;
    const auto n = static_cast<std::size_t>(x.rows());
    map.upper_bounds.resize(static_cast<std::size_t>(x.cols()));
    std::vector<double> values(n);
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        for (std::size_t i = 0; i < n; ++i) values[i] = x(static_cast<Eigen::Index>(i), f);
        std::sort(values.begin(), values.end());

        std::vector<std::pair<double, std::size_t>> distinct;
        for (double v : values) {
            if (distinct.empty() || distinct.back().first != v) distinct.emplace_back(v, 0);
            ++distinct.back().second;
        }
        auto& bounds = map.upper_bounds[static_cast<std::size_t>(f)];
        if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
            for (const auto& [v, _] : distinct) bounds.push_back(v);
            continue;
        }
        // Close a bin once the running count reaches the next quantile mark.
        std::size_t seen = 0;
        for (std::size_t d = 0; d < distinct.size(); ++d) {
            seen += distinct[d].second;
            const double mark = static_cast<double>(bounds.size() + 1) * static_cast<double>(n) / max_bins;
            if (static_cast<double>(seen) >= mark || d + 1 == distinct.size()) bounds.push_back(distinct[d].first);
        }
    }
    return map;
}

int HistogramBinMap::bin(std::size_t feature, double value) const {
    const auto& bounds = upper_bounds[feature];
    auto it = std::lower_bound(bounds.begin(), bounds.end(), value);
    if (it == bounds.end()) return static_cast<int>(bounds.size()) - 1;
    return static_cast<int>(it - bounds.begin());
}

// --- exclusive feature bundling ----------------------------------------------

EfbBundles EfbBundles::build(const std::vector<std::vector<int>>& binned, const HistogramBinMap& bins,
                             double conflict_rate) {
    if (!(conflict_rate >= 0.0 && conflict_rate < 1.0))
        throw Error(ErrorCode::InvalidParams, "learners", "efb conflict rate must be in [0,1)");
    constexpr int kMaxCodes = 1 << 16;

    const std::size_t p = binned.size();
    const std::size_t n = p ? binned.front().size() : 0;
    EfbBundles out;
    out.bundle_of.assign(p, -1);
    out.offset.assign(p, 0);
    out.default_bin.assign(p, 0);

    std::vector<std::vector<std::size_t>> active(p);
    for (std::size_t f = 0; f < p; ++f) {
        std::vector<std::size_t> counts(bins.bin_count(f), 0);
        for (int b : binned[f]) ++counts[static_cast<std::size_t>(b)];
        out.default_bin[f] = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
        for (std::size_t r = 0; r < n; ++r)
            if (binned[f][r] != out.default_bin[f]) active[f].push_back(r);
    }

    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return active[a].size() > active[b].size(); });

    const auto budget = static_cast<std::size_t>(std::floor(conflict_rate * static_cast<double>(n)));
    struct Open {
        std::vector<char> used;
        std::size_t conflicts = 0;
        int codes = 1;
    };
    std::vector<Open> open;
    for (auto f : order) {
        const int extra = static_cast<int>(bins.bin_count(f)) - 1;
        bool placed = false;
        for (std::size_t b = 0; b < open.size() && !placed; ++b) {
            if (open[b].codes + extra > kMaxCodes) continue;
            std::size_t conflicts = 0;
            for (auto r : active[f]) conflicts += open[b].used[r] ? 1 : 0;
            if (open[b].conflicts + conflicts > budget) continue;
            open[b].conflicts += conflicts;
            open[b].codes += extra;
            for (auto r : active[f]) open[b].used[r] = 1;
            out.bundles[b].push_back(static_cast<int>(f));
            placed = true;
        }
        if (!placed) {
            Open fresh{std::vector<char>(n, 0), 0, 1 + extra};
            for (auto r : active[f]) fresh.used[r] = 1;
            open.push_back(std::move(fresh));
            out.bundles.push_back({static_cast<int>(f)});
        }
    }

    for (std::size_t b = 0; b < out.bundles.size(); ++b) {
        auto& members = out.bundles[b];
        std::sort(members.begin(), members.end());
        if (members.size() == 1) {
            const auto f = static_cast<std::size_t>(members.front());
            out.bundle_of[f] = static_cast<int>(b);
            out.bundle_bins.push_back(static_cast<int>(bins.bin_count(f)));
            continue;
        }
        int next = 1;  // code 0: every member at its default bin
        for (int f : members) {
            out.bundle_of[static_cast<std::size_t>(f)] = static_cast<int>(b);
            out.offset[static_cast<std::size_t>(f)] = next;
            next += static_cast<int>(bins.bin_count(static_cast<std::size_t>(f))) - 1;
        }
        out.bundle_bins.push_back(next);
    }
    return out;
}

int EfbBundles::encode(std::size_t bundle, const std::vector<std::vector<int>>& binned, std::size_t row) const {
    const auto& members = bundles[bundle];
    if (members.size() == 1) return binned[static_cast<std::size_t>(members.front())][row];
    for (int f : members) {
        const auto fi = static_cast<std::size_t>(f);
        const int k = binned[fi][row];
        const int d = default_bin[fi];
        if (k != d) return offset[fi] + (k < d ? k : k - 1);
    }
    return 0;
}

int EfbBundles::decode(std::size_t feature, int code) const {
    const auto b = static_cast<std::size_t>(bundle_of[feature]);
    if (singleton(b)) return code;
    const int d = default_bin[feature];
    const int first = offset[feature];
    int last = bundle_bins[b];
    for (int f : bundles[b])
        if (offset[static_cast<std::size_t>(f)] > first) last = std::min(last, offset[static_cast<std::size_t>(f)]);
    if (code < first || code >= last) return d;
    const int rank = code - first;
    return rank < d ? rank : rank + 1;
}

// --- GOSS --------------------------------------------------------------------

GossSample goss_sample(std::span<const double> gradients, const GossConfig& config, std::uint64_t seed) {
    const double a = config.top_rate;
    const double b = config.other_rate;
    if (!(a > 0.0 && a <= 1.0) || !(b >= 0.0 && b <= 1.0 - a + 1e-12))
        throw Error(ErrorCode::InvalidParams, "learners", "GOSS needs top_rate in (0,1] and other_rate in [0,1-top_rate]");

    const std::size_t n = gradients.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto i, auto j) { return std::abs(gradients[i]) > std::abs(gradients[j]); });

    const auto top = std::min(n, static_cast<std::size_t>(std::ceil(a * static_cast<double>(n) - 1e-9)));
    std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(top), order.end());
    const auto other = std::min(rest.size(), static_cast<std::size_t>(std::ceil(b * static_cast<double>(n) - 1e-9)));
    std::mt19937_64 rng(seed);
    std::shuffle(rest.begin(), rest.end(), rng);

    std::vector<double> weight(n, 0.0);
    for (std::size_t k = 0; k < top; ++k) weight[order[k]] = 1.0;
    const double amplify = b > 0.0 ? (1.0 - a) / b : 1.0;
    for (std::size_t k = 0; k < other; ++k) weight[rest[k]] = amplify;

    GossSample out;
    for (std::size_t i = 0; i < n; ++i)
        if (weight[i] > 0.0) {
            out.rows.push_back(i);
            out.weight.push_back(weight[i]);
        }
    return out;
}

// --- histogram grower ----------------------------------------------------------

namespace {

class HistGrower {
public:
    HistGrower(const RowMatrix& x, const GbtParams& params, const HistParams& hist)
        : params_(params), hist_(hist), bins_(HistogramBinMap::build(x, hist.max_bins)) {
        const auto n = static_cast<std::size_t>(x.rows());
        const auto p = static_cast<std::size_t>(x.cols());
        binned_.assign(p, std::vector<int>(n));
        for (std::size_t f = 0; f < p; ++f)
            for (std::size_t r = 0; r < n; ++r) binned_[f][r] = bins_.bin(f, x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)));

        if (hist.efb) {
            bundles_ = EfbBundles::build(binned_, bins_, hist.efb_conflict_rate);
        } else {
            for (std::size_t f = 0; f < p; ++f) {
                bundles_.bundles.push_back({static_cast<int>(f)});
                bundles_.bundle_of.push_back(static_cast<int>(f));
                bundles_.offset.push_back(0);
                bundles_.default_bin.push_back(0);
                bundles_.bundle_bins.push_back(static_cast<int>(bins_.bin_count(f)));
            }
        }
        codes_.resize(bundles_.bundles.size());
        for (std::size_t b = 0; b < codes_.size(); ++b) {
            codes_[b].resize(n);
            for (std::size_t r = 0; r < n; ++r) codes_[b][r] = bundles_.encode(b, binned_, r);
        }
    }

    RegressionTree grow(const std::vector<double>& g, const std::vector<double>& h, int step) {
        const std::size_t n = g.size();
        gw_.assign(n, 0.0);
        hw_.assign(n, 0.0);
        std::vector<int> rows;
        // The first tree sees every row: its gradients are all relative to
        // the base score and carry no ranking information yet.
        if (hist_.goss.enabled && step > 0) {
            const auto sample = goss_sample(g, hist_.goss, hist_.seed + static_cast<std::uint64_t>(step));
            for (std::size_t k = 0; k < sample.rows.size(); ++k) {
                const auto r = sample.rows[k];
                rows.push_back(static_cast<int>(r));
                gw_[r] = g[r] * sample.weight[k];
                hw_[r] = h[r] * sample.weight[k];
            }
        } else {
            for (std::size_t r = 0; r < n; ++r) {
                rows.push_back(static_cast<int>(r));
                gw_[r] = g[r];
                hw_[r] = h[r];
            }
        }
        tree_ = RegressionTree{};
        build(rows, 0);
        return std::move(tree_);
    }

private:
    struct Bin {
        double g = 0.0;
        double h = 0.0;
        std::size_t n = 0;
    };

    struct Split {
        int feature = -1;
        int bin = -1;
        double gain = 0.0;
    };

    int build(const std::vector<int>& rows, int depth) {
        double sum_g = 0.0;
        double sum_h = 0.0;
        for (int r : rows) {
            sum_g += gw_[static_cast<std::size_t>(r)];
            sum_h += hw_[static_cast<std::size_t>(r)];
        }
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back(TreeNode{-1, 0.0, -1, -1, detail::leaf_weight(sum_g, sum_h, params_.lambda_reg)});
        if (depth >= params_.max_depth || rows.size() < 2) return id;

        const Split best = find_split(rows, sum_g, sum_h);
        if (best.feature < 0) return id;

        const auto& column = binned_[static_cast<std::size_t>(best.feature)];
        std::vector<int> left;
        std::vector<int> right;
        for (int r : rows) (column[static_cast<std::size_t>(r)] <= best.bin ? left : right).push_back(r);
        const int l = build(left, depth + 1);
        const int rt = build(right, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = best.feature;
        node.threshold = bins_.upper_bounds[static_cast<std::size_t>(best.feature)][static_cast<std::size_t>(best.bin)];
        node.left = l;
        node.right = rt;
        return id;
    }

    Split find_split(const std::vector<int>& rows, double sum_g, double sum_h) {
        // One histogram per bundle, accumulated in row order.
        std::vector<std::vector<Bin>> group(bundles_.bundles.size());
        for (std::size_t b = 0; b < group.size(); ++b) {
            group[b].assign(static_cast<std::size_t>(bundles_.bundle_bins[b]), Bin{});
            const auto& codes = codes_[b];
            for (int r : rows) {
                auto& bin = group[b][static_cast<std::size_t>(codes[static_cast<std::size_t>(r)])];
                bin.g += gw_[static_cast<std::size_t>(r)];
                bin.h += hw_[static_cast<std::size_t>(r)];
                ++bin.n;
            }
        }

        Split best;
        const std::size_t count = rows.size();
        std::vector<Bin> feature_hist;
        for (std::size_t f = 0; f < binned_.size(); ++f) {
            const auto b = static_cast<std::size_t>(bundles_.bundle_of[f]);
            const std::size_t nb = bins_.bin_count(f);
            if (nb < 2) continue;
            if (bundles_.singleton(b)) {
                feature_hist = group[b];
            } else {
                // Unpack this member's bins; its default bin is what remains.
                feature_hist.assign(nb, Bin{});
                const int d = bundles_.default_bin[f];
                Bin rest{};
                for (std::size_t k = 0; k < nb; ++k) {
                    if (static_cast<int>(k) == d) continue;
                    const int code = bundles_.offset[f] + (static_cast<int>(k) < d ? static_cast<int>(k) : static_cast<int>(k) - 1);
                    feature_hist[k] = group[b][static_cast<std::size_t>(code)];
                    rest.g += feature_hist[k].g;
                    rest.h += feature_hist[k].h;
                    rest.n += feature_hist[k].n;
                }
                feature_hist[static_cast<std::size_t>(d)] = Bin{sum_g - rest.g, sum_h - rest.h, count - rest.n};
            }

            double gl = 0.0;
            double hl = 0.0;
            std::size_t nl = 0;
            for (std::size_t k = 0; k + 1 < nb; ++k) {
                gl += feature_hist[k].g;
                hl += feature_hist[k].h;
                nl += feature_hist[k].n;
                if (nl == 0) continue;
                if (nl == count) break;
                const double gr = sum_g - gl;
                const double hr = sum_h - hl;
                if (hl < params_.min_child_hessian || hr < params_.min_child_hessian) continue;
                const double gain = detail::split_gain(gl, hl, gr, hr, params_.lambda_reg, params_.gamma_split);
                if (gain > best.gain) best = Split{static_cast<int>(f), static_cast<int>(k), gain};
            }
        }
        return best;
    }

    GbtParams params_;
    HistParams hist_;
    HistogramBinMap bins_;
    EfbBundles bundles_;
    std::vector<std::vector<int>> binned_;  // [feature][row]
    std::vector<std::vector<int>> codes_;   // [bundle][row]
    std::vector<double> gw_;
    std::vector<double> hw_;
    RegressionTree tree_;
};

}  // namespace

GbtModel fit_gbt_hist(const FeatureMatrix& x, const Eigen::VectorXd& y, const GbtParams& params, const HistParams& hist) {
    detail::validate(params);
    if (hist.goss.enabled) (void)goss_sample(std::span<const double>{}, hist.goss, 0);  // parameter check
    HistGrower grower(x.rows, params, hist);
    auto model = detail::boost(
        x, y, params, GbtMode::Histogram,
        [&](const std::vector<double>& g, const std::vector<double>& h, int step) { return grower.grow(g, h, step); });
    model.hist = hist;
    return model;
}

}  // namespace merchcast::learners
