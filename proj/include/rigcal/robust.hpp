#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "rigcal/rng.hpp"
#include "rigcal/types.hpp"

namespace rigcal {

// Cauchy loss with scale 1.
inline double cauchy_cost(double squared_residual) { return std::log1p(squared_residual); }

// First-order reweighting factor rho'(s^2) used inside LM.
inline double cauchy_weight(double squared_residual) { return 1.0 / (1.0 + squared_residual); }

struct RobustLoss {
    enum class Kind { Trivial, Cauchy };
    Kind kind = Kind::Trivial;

    static RobustLoss trivial() { return {Kind::Trivial}; }
    static RobustLoss cauchy() { return {Kind::Cauchy}; }

    double cost(double s2) const { return kind == Kind::Cauchy ? cauchy_cost(s2) : s2; }
    double weight(double s2) const { return kind == Kind::Cauchy ? cauchy_weight(s2) : 1.0; }
};

struct RansacConfig {
    double threshold = 4.0;
    double confidence = 0.999;
    int max_iterations = 1000;
    int min_inliers = 20;
    std::uint64_t seed = 0;
};

template <typename Model>
struct RansacResult {
    Model model;
    std::vector<bool> inlier_mask;
    int inlier_count = 0;
    int iterations_used = 0;
    double inlier_rms = 0.0;
};

namespace detail {

// Distinct uniform indices; rejection sampling keeps the draw portable.
inline void draw_sample(Rng &rng, int n, int sample_size, std::vector<int> *out) {
    out->clear();
    while (static_cast<int>(out->size()) < sample_size) {
        const int cand = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
        bool dup = false;
        for (int prev : *out) dup = dup || (prev == cand);
        if (!dup) out->push_back(cand);
    }
}

inline int adaptive_iteration_cap(double inlier_ratio, int sample_size, double confidence, int hard_cap) {
    if (inlier_ratio <= 0.0) return hard_cap;
    const double w_s = std::pow(inlier_ratio, sample_size);
    if (w_s >= 1.0 - 1e-12) return 1;
    const double needed = std::log(1.0 - confidence) / std::log(1.0 - w_s);
    if (!(needed < static_cast<double>(hard_cap))) return hard_cap;
    return std::max(1, static_cast<int>(std::ceil(needed)));
}

template <typename Model, typename Scorer>
void classify(const Model &model, Scorer &&scorer, int n, double threshold, std::vector<bool> *mask, int *count,
              double *rms) {
    mask->assign(n, false);
    *count = 0;
    double ssq = 0.0;
    for (int i = 0; i < n; ++i) {
        double r;
        try {
            r = scorer(model, i);
        } catch (const Error &) {
            continue;  // e.g. point behind camera under this hypothesis
        }
        if (r <= threshold) {
            (*mask)[i] = true;
            ++*count;
            ssq += r * r;
        }
    }
    *rms = *count ? std::sqrt(ssq / *count) : 0.0;
}

}  // namespace detail

// Generic RANSAC over n correspondences. The solver maps a minimal index
// sample to candidate models (it may throw solver errors, which count as a
// failed hypothesis); the scorer returns a per-correspondence residual in
// pixels; the refitter (optional) polishes a model on its inlier set and is
// iterated with re-classification for up to 5 rounds. Deterministic in
// config.seed.
template <typename Model, typename Solver, typename Scorer, typename Refitter>
RansacResult<Model> ransac(int n, int sample_size, Solver &&solver, Scorer &&scorer, Refitter &&refitter,
                           const RansacConfig &config) {
    if (n < sample_size) {
        throw NotEnoughInliers("ransac: fewer correspondences than the minimal sample size");
    }
    Rng rng(config.seed);
    RansacResult<Model> best;
    bool have_best = false;

    int cap = config.max_iterations;
    std::vector<int> sample;
    std::vector<bool> mask;
    int it = 0;
    for (; it < cap; ++it) {
        detail::draw_sample(rng, n, sample_size, &sample);
        std::vector<Model> candidates;
        try {
            candidates = solver(sample);
        } catch (const Error &) {
            continue;
        }
        for (const Model &m : candidates) {
            int count = 0;
            double rms = 0.0;
            detail::classify(m, scorer, n, config.threshold, &mask, &count, &rms);
            if (!have_best || count > best.inlier_count ||
                (count == best.inlier_count && rms < best.inlier_rms)) {
                best.model = m;
                best.inlier_mask = mask;
                best.inlier_count = count;
                best.inlier_rms = rms;
                have_best = true;
                cap = std::min(cap, detail::adaptive_iteration_cap(static_cast<double>(count) / n, sample_size,
                                                                   config.confidence, config.max_iterations));
            }
        }
    }
    best.iterations_used = it;
    if (!have_best || best.inlier_count < config.min_inliers) {
        throw NotEnoughInliers("ransac: best model has too few inliers");
    }

    // Iterated refit on the inlier set, keeping only improvements.
    for (int round = 0; round < 5; ++round) {
        std::vector<int> inliers;
        for (int i = 0; i < n; ++i)
            if (best.inlier_mask[i]) inliers.push_back(i);
        std::optional<Model> polished;
        try {
            polished = refitter(best.model, inliers);
        } catch (const Error &) {
            break;
        }
        if (!polished) break;
        int count = 0;
        double rms = 0.0;
        detail::classify(*polished, scorer, n, config.threshold, &mask, &count, &rms);
        if (count < best.inlier_count || (count == best.inlier_count && rms >= best.inlier_rms)) break;
        const bool same_set = (mask == best.inlier_mask);
        best.model = *polished;
        best.inlier_mask = mask;
        best.inlier_count = count;
        best.inlier_rms = rms;
        if (same_set) break;
    }
    if (best.inlier_count < config.min_inliers) {
        throw NotEnoughInliers("ransac: refit lost too many inliers");
    }
    return best;
}

// RANSAC without a refit step.
template <typename Model, typename Solver, typename Scorer>
RansacResult<Model> ransac(int n, int sample_size, Solver &&solver, Scorer &&scorer, const RansacConfig &config) {
    auto no_refit = [](const Model &, const std::vector<int> &) { return std::optional<Model>(); };
    return ransac<Model>(n, sample_size, solver, scorer, no_refit, config);
}

}  // namespace rigcal
