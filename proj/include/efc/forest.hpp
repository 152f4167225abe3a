#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "efc/rng.hpp"

namespace efc {

/// Dense row-major feature table. MISSING features must already be encoded
/// (the imputer uses a value below every observation).
struct FeatureTable {
    std::size_t n_rows = 0;
    std::size_t n_features = 0;
    std::vector<double> values;

    double at(std::size_t row, std::size_t feature) const { return values[row * n_features + feature]; }
    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(values).subspan(r * n_features, n_features);
    }
};

struct TreeParams {
    std::size_t min_leaf = 5;
    /// Features sampled per split; 0 means floor(sqrt(n_features)).
    std::size_t features_per_split = 0;
};

/// CART regression tree: each split minimises the summed within-child
/// squared error; every leaf keeps at least min_leaf training rows and
/// predicts their mean. When none of the sampled features yields a usable
/// split, the remaining features are tried before a node becomes a leaf.
class RegressionTree {
public:
    void fit(const FeatureTable& x, std::span<const double> y, std::vector<std::size_t> rows, const TreeParams& params,
             Rng& rng);
    double predict(std::span<const double> features) const;
    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t leaf_count() const;

private:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        std::uint32_t left = 0;
        std::uint32_t right = 0;
        double value = 0.0;
    };

    std::uint32_t grow(const FeatureTable& x, std::span<const double> y, std::vector<std::size_t>& rows,
                       std::size_t begin, std::size_t end, const TreeParams& params, Rng& rng);

    std::vector<Node> nodes_;
};

struct ForestParams {
    std::size_t trees = 100;
    TreeParams tree;
    bool bootstrap = true;
};

/// Bagged ensemble of RegressionTree; prediction is the mean over trees.
/// Tree i draws from its own seed derived from (seed, i).
class RandomForestRegressor {
public:
    void fit(const FeatureTable& x, std::span<const double> y, const std::vector<std::size_t>& rows,
             const ForestParams& params, std::uint64_t seed);
    double predict(std::span<const double> features) const;
    std::size_t size() const noexcept { return trees_.size(); }

private:
    std::vector<RegressionTree> trees_;
};

}  // namespace efc
