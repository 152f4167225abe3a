#include "efc/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "efc/error.hpp"

namespace efc {

namespace {

struct Split {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

// Best threshold on one feature for rows[begin, end). y values are centred
// on the node mean so the squared sums stay well conditioned.
Split best_split_on(const FeatureTable& x, std::span<const double> y, const std::vector<std::size_t>& rows,
                    std::size_t begin, std::size_t end, std::size_t feature, double node_mean, double node_sse,
                    std::size_t min_leaf, std::vector<std::pair<double, double>>& scratch) {
    scratch.clear();
    for (std::size_t i = begin; i < end; ++i) scratch.emplace_back(x.at(rows[i], feature), y[rows[i]] - node_mean);
    std::sort(scratch.begin(), scratch.end(),
              [](const auto& a, const auto& b) { return a.first < b.first || (a.first == b.first && a.second < b.second); });
    const std::size_t n = scratch.size();
    double total = 0.0;
    for (const auto& p : scratch) total += p.second;

    Split best;
    double left_sum = 0.0, left_sq = 0.0, total_sq = 0.0;
    for (const auto& p : scratch) total_sq += p.second * p.second;
    for (std::size_t i = 1; i < n; ++i) {
        left_sum += scratch[i - 1].second;
        left_sq += scratch[i - 1].second * scratch[i - 1].second;
        if (i < min_leaf || n - i < min_leaf) continue;
        if (!(scratch[i - 1].first < scratch[i].first)) continue;
        const auto nl = static_cast<double>(i);
        const auto nr = static_cast<double>(n - i);
        const double right_sum = total - left_sum;
        const double right_sq = total_sq - left_sq;
        const double sse = (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
        const double gain = node_sse - sse;
        if (gain > best.gain) {
            const double lo = scratch[i - 1].first;
            const double hi = scratch[i].first;
            double thr = lo + (hi - lo) / 2.0;
            if (!(thr < hi)) thr = lo;
            best = {true, feature, thr, gain};
        }
    }
    return best;
}

}  // namespace

void RegressionTree::fit(const FeatureTable& x, std::span<const double> y, std::vector<std::size_t> rows,
                         const TreeParams& params, Rng& rng) {
    if (rows.empty()) throw Error(ErrorKind::Config, "regression tree needs at least one training row");
    if (params.min_leaf == 0) throw Error(ErrorKind::Config, "min_leaf must be positive");
    nodes_.clear();
    grow(x, y, rows, 0, rows.size(), params, rng);
}

std::uint32_t RegressionTree::grow(const FeatureTable& x, std::span<const double> y, std::vector<std::size_t>& rows,
                                   std::size_t begin, std::size_t end, const TreeParams& params, Rng& rng) {
    const std::size_t n = end - begin;
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) sum += y[rows[i]];
    const double node_mean = sum / static_cast<double>(n);
    double sse = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        const double d = y[rows[i]] - node_mean;
        sse += d * d;
    }

    const auto index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{-1, 0.0, 0, 0, node_mean});
    if (n < 2 * params.min_leaf || sse <= 0.0 || x.n_features == 0) return index;

    std::vector<std::size_t> features(x.n_features);
    std::iota(features.begin(), features.end(), 0);
    for (std::size_t i = 0; i + 1 < features.size(); ++i)
        std::swap(features[i], features[i + uniform_below(rng, features.size() - i)]);
    std::size_t mtry = params.features_per_split;
    if (mtry == 0) mtry = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(x.n_features))));
    mtry = std::clamp<std::size_t>(mtry, 1, x.n_features);

    // Gains below this are rounding noise, not structure.
    const double min_gain = sse * 1e-12;
    std::vector<std::pair<double, double>> scratch;
    scratch.reserve(n);
    Split best;
    for (std::size_t k = 0; k < features.size(); ++k) {
        if (k >= mtry && best.found) break;
        Split s = best_split_on(x, y, rows, begin, end, features[k], node_mean, sse, params.min_leaf, scratch);
        if (s.found && s.gain > min_gain && (!best.found || s.gain > best.gain)) best = s;
    }
    if (!best.found) return index;

    const auto mid_it = std::stable_partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                              rows.begin() + static_cast<std::ptrdiff_t>(end),
                                              [&](std::size_t r) { return x.at(r, best.feature) <= best.threshold; });
    const auto mid = static_cast<std::size_t>(mid_it - rows.begin());
    const std::uint32_t left = grow(x, y, rows, begin, mid, params, rng);
    const std::uint32_t right = grow(x, y, rows, mid, end, params, rng);
    nodes_[index].feature = static_cast<int>(best.feature);
    nodes_[index].threshold = best.threshold;
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
}

double RegressionTree::predict(std::span<const double> features) const {
    std::uint32_t i = 0;
    while (nodes_[i].feature >= 0)
        i = features[static_cast<std::size_t>(nodes_[i].feature)] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
    return nodes_[i].value;
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

void RandomForestRegressor::fit(const FeatureTable& x, std::span<const double> y, const std::vector<std::size_t>& rows,
                                const ForestParams& params, std::uint64_t seed) {
    if (params.trees == 0) throw Error(ErrorKind::Config, "forest needs at least one tree");
    trees_.assign(params.trees, RegressionTree{});
    for (std::size_t i = 0; i < params.trees; ++i) {
        Rng rng = make_rng(derive_seed(seed, {i}));
        std::vector<std::size_t> sample;
        if (params.bootstrap) {
            sample.resize(rows.size());
            for (auto& s : sample) s = rows[uniform_below(rng, rows.size())];
        } else {
            sample = rows;
        }
        trees_[i].fit(x, y, std::move(sample), params.tree, rng);
    }
}

double RandomForestRegressor::predict(std::span<const double> features) const {
    double sum = 0.0;
    for (const auto& t : trees_) sum += t.predict(features);
    return sum / static_cast<double>(trees_.size());
}

}  // namespace efc
