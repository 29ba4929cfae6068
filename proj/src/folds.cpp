#include "biomark/folds.hpp"

#include <algorithm>
#include <string>

#include "biomark/error.hpp"
#include "biomark/rng.hpp"

namespace biomark {

std::vector<std::size_t> FoldPlan::rows_in(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldPlan::rows_not_in(std::initializer_list<std::size_t> excluded) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (std::find(excluded.begin(), excluded.end(), fold_of[i]) == excluded.end()) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
    std::vector<std::size_t> s(k, 0);
    for (auto f : fold_of) ++s[f];
    return s;
}

FoldPlan partition(std::size_t n, std::size_t k, std::uint64_t seed, std::span<const int> labels) {
    if (labels.size() != n) throw ValidationError("partition: label count differs from n");
    if (k < 2) throw ValidationError("partition: K must be >= 2");
    if (n < k) throw ValidationError("partition: n = " + std::to_string(n) + " is smaller than K = " + std::to_string(k));
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw ValidationError("partition: labels must be 0 or 1");
        by_class[labels[i]].push_back(i);
    }
    for (int c = 0; c < 2; ++c)
        if (by_class[c].size() < k)
            throw ValidationError("partition: class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                                  " rows, fewer than K = " + std::to_string(k) + " (stratification infeasible)");

    FoldPlan plan{n, k, seed, std::vector<std::size_t>(n, 0)};
    Rng rng(seed);
    std::size_t next = 0;
    for (auto& rows : by_class) {
        rng.shuffle(std::span<std::size_t>(rows));
        for (auto r : rows) {
            plan.fold_of[r] = next;
            next = (next + 1) % k;
        }
    }
    return plan;
}

}  // namespace biomark
