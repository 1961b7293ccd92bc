#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "rigcal/geometry.hpp"
#include "rigcal/robust.hpp"
#include "rigcal/types.hpp"

namespace rigcal {

struct LmConfig {
    int max_iterations = 100;
    double function_tolerance = 1e-10;
    double parameter_tolerance = 1e-10;
    double initial_damping = 1e-4;
};

enum class LmStop { FunctionTolerance, ParameterTolerance, MaxIterations, Stalled };

struct LmSummary {
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int iterations = 0;
    LmStop reason = LmStop::MaxIterations;
};

enum class Manifold { Euclidean, UnitQuaternion };

// One term of the least-squares objective. `params` are the raw block values
// (quaternions stored as x, y, z, w); `jacobians`, when non-null, holds one
// pre-sized matrix per block (dim x local size, tangent space for
// quaternions), with null entries for blocks whose Jacobian is not needed.
class Residual {
  public:
    virtual ~Residual() = default;
    virtual int dim() const = 0;
    virtual void evaluate(const double *const *params, double *residual, MatX **jacobians) const = 0;
};

// Block-structured nonlinear least-squares problem. Parameter blocks live on
// either Euclidean space or the unit-quaternion manifold (3-dof right
// tangent updates); blocks marked as points are Schur-eliminated. A residual
// may reference at most one point block.
class Problem {
  public:
    int add_block(const VecX &value, Manifold manifold = Manifold::Euclidean) {
        blocks_.push_back({value, manifold, false, false});
        return static_cast<int>(blocks_.size()) - 1;
    }

    int add_rotation_block(const Rotation &r) { return add_block(r.quat().coeffs(), Manifold::UnitQuaternion); }

    void set_constant(int id, bool constant = true) { blocks_[id].constant = constant; }

    void mark_point(int id) { blocks_[id].point = true; }

    void add_residual(std::unique_ptr<Residual> residual, std::vector<int> block_ids) {
        items_.push_back({std::move(residual), std::move(block_ids)});
    }

    const VecX &value(int id) const { return blocks_[id].value; }
    VecX &value(int id) { return blocks_[id].value; }

    Rotation rotation(int id) const {
        const VecX &v = blocks_[id].value;
        return Rotation(Eigen::Quaterniond(v(3), v(0), v(1), v(2)));
    }

    int num_blocks() const { return static_cast<int>(blocks_.size()); }
    int num_residuals() const { return static_cast<int>(items_.size()); }

  private:
    struct Block {
        VecX value;
        Manifold manifold;
        bool constant;
        bool point;
    };
    struct Item {
        std::unique_ptr<Residual> residual;
        std::vector<int> blocks;
    };

    static int local_size(const Block &b) {
        return b.manifold == Manifold::UnitQuaternion ? 3 : static_cast<int>(b.value.size());
    }

    static void retract(Block *b, const Eigen::Ref<const VecX> &delta) {
        if (b->manifold == Manifold::UnitQuaternion) {
            Eigen::Quaterniond q(b->value(3), b->value(0), b->value(1), b->value(2));
            q = q * Rotation::exp(delta.head<3>()).quat();
            q.normalize();
            b->value = q.coeffs();
        } else {
            b->value += delta;
        }
    }

    std::vector<Block> blocks_;
    std::vector<Item> items_;

    friend LmSummary lm_minimize(Problem &, const RobustLoss &, const LmConfig &);
};

// Levenberg-Marquardt with multiplicative diagonal damping and first-order
// robust reweighting. Accepted steps never increase the robustified cost.
inline LmSummary lm_minimize(Problem &problem, const RobustLoss &loss, const LmConfig &config) {
    auto &blocks = problem.blocks_;
    auto &items = problem.items_;

    // Column layout: non-constant, non-point blocks share the dense system;
    // point blocks are eliminated per block.
    int dense_dim = 0;
    std::vector<int> offset(blocks.size(), -1);
    std::vector<int> point_slot(blocks.size(), -1);
    std::vector<int> point_blocks;
    for (size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i].constant) continue;
        if (blocks[i].point) {
            point_slot[i] = static_cast<int>(point_blocks.size());
            point_blocks.push_back(static_cast<int>(i));
        } else {
            offset[i] = dense_dim;
            dense_dim += Problem::local_size(blocks[i]);
        }
    }
    for (const auto &item : items) {
        int npt = 0;
        for (int id : item.blocks) npt += (blocks[id].point && !blocks[id].constant) ? 1 : 0;
        if (npt > 1) throw Error("lm_minimize: a residual may reference at most one point block");
    }

    LmSummary summary;
    auto eval_cost = [&](const std::vector<Problem::Block> &state) {
        double cost = 0.0;
        std::vector<const double *> params;
        VecX r;
        for (const auto &item : items) {
            params.clear();
            for (int id : item.blocks) params.push_back(state[id].value.data());
            r.resize(item.residual->dim());
            item.residual->evaluate(params.data(), r.data(), nullptr);
            cost += loss.cost(r.squaredNorm());
        }
        return cost;
    };

    summary.initial_cost = eval_cost(blocks);
    summary.final_cost = summary.initial_cost;
    if ((dense_dim == 0 && point_blocks.empty()) || summary.initial_cost == 0.0) {
        summary.reason = LmStop::FunctionTolerance;
        return summary;
    }

    // Per-point Schur scratch: normal-equation block, gradient, and the
    // cross strips E keyed by dense block id.
    struct PointData {
        MatX c;
        VecX g;
        std::vector<std::pair<int, MatX>> strips;
    };
    std::vector<PointData> points(point_blocks.size());

    MatX h(dense_dim, dense_dim);
    VecX grad(dense_dim);
    std::vector<MatX> jac_store;
    std::vector<MatX *> jac_ptrs;
    std::vector<const double *> params;
    VecX r;

    double lambda = config.initial_damping;
    double cost = summary.initial_cost;
    int it = 0;
    bool converged = false;
    for (; it < config.max_iterations && !converged; ++it) {
        h.setZero();
        grad.setZero();
        for (size_t p = 0; p < points.size(); ++p) {
            const int ls = Problem::local_size(blocks[point_blocks[p]]);
            points[p].c = MatX::Zero(ls, ls);
            points[p].g = VecX::Zero(ls);
            points[p].strips.clear();
        }

        for (const auto &item : items) {
            const int nb = static_cast<int>(item.blocks.size());
            const int dim = item.residual->dim();
            params.clear();
            jac_store.resize(nb);
            jac_ptrs.assign(nb, nullptr);
            int pt = -1;
            for (int k = 0; k < nb; ++k) {
                const int id = item.blocks[k];
                params.push_back(blocks[id].value.data());
                if (blocks[id].constant) continue;
                jac_store[k].resize(dim, Problem::local_size(blocks[id]));
                jac_ptrs[k] = &jac_store[k];
                if (blocks[id].point) pt = k;
            }
            r.resize(dim);
            item.residual->evaluate(params.data(), r.data(), jac_ptrs.data());
            const double w = loss.weight(r.squaredNorm());

            for (int a = 0; a < nb; ++a) {
                if (!jac_ptrs[a] || a == pt) continue;
                const int oa = offset[item.blocks[a]];
                const int la = static_cast<int>(jac_store[a].cols());
                grad.segment(oa, la).noalias() += w * jac_store[a].transpose() * r;
                for (int b = 0; b < nb; ++b) {
                    if (!jac_ptrs[b] || b == pt) continue;
                    h.block(oa, offset[item.blocks[b]], la, jac_store[b].cols()).noalias() +=
                        w * jac_store[a].transpose() * jac_store[b];
                }
            }
            if (pt >= 0) {
                PointData &pd = points[point_slot[item.blocks[pt]]];
                pd.c.noalias() += w * jac_store[pt].transpose() * jac_store[pt];
                pd.g.noalias() += w * jac_store[pt].transpose() * r;
                for (int a = 0; a < nb; ++a) {
                    if (!jac_ptrs[a] || a == pt) continue;
                    const int id = item.blocks[a];
                    MatX strip = w * jac_store[a].transpose() * jac_store[pt];
                    bool merged = false;
                    for (auto &[bid, m] : pd.strips) {
                        if (bid == id) {
                            m += strip;
                            merged = true;
                            break;
                        }
                    }
                    if (!merged) pd.strips.emplace_back(id, std::move(strip));
                }
            }
        }

        bool stepped = false;
        bool last_factor_failed = false;
        while (lambda <= 1e12) {
            last_factor_failed = false;
            MatX s = h;
            for (int d = 0; d < dense_dim; ++d) s(d, d) += lambda * std::max(h(d, d), 1e-12);
            VecX rhs = grad;

            std::vector<Eigen::LDLT<MatX>> point_factor(points.size());
            bool factor_ok = true;
            for (size_t p = 0; p < points.size() && factor_ok; ++p) {
                MatX cd = points[p].c;
                for (int d = 0; d < cd.rows(); ++d) cd(d, d) += lambda * std::max(points[p].c(d, d), 1e-12);
                point_factor[p].compute(cd);
                if (point_factor[p].info() != Eigen::Success) {
                    factor_ok = false;
                    break;
                }
                const VecX cg = point_factor[p].solve(points[p].g);
                for (const auto &[ida, ea] : points[p].strips) {
                    rhs.segment(offset[ida], ea.rows()).noalias() -= ea * cg;
                    const MatX cea = point_factor[p].solve(ea.transpose());  // C^-1 E_a^T
                    for (const auto &[idb, eb] : points[p].strips) {
                        s.block(offset[ida], offset[idb], ea.rows(), eb.rows()).noalias() -=
                            cea.transpose() * eb.transpose();
                    }
                }
            }

            Eigen::LDLT<MatX> ldlt;
            VecX delta = VecX::Zero(dense_dim);
            if (factor_ok && dense_dim > 0) {
                ldlt.compute(s);
                factor_ok = ldlt.info() == Eigen::Success;
                if (factor_ok) {
                    delta = ldlt.solve(-rhs);
                    factor_ok = delta.allFinite();
                }
            }
            if (!factor_ok) {
                last_factor_failed = true;
                lambda *= 4.0;
                continue;
            }

            std::vector<Problem::Block> trial = blocks;
            double step_norm2 = delta.squaredNorm();
            for (size_t i = 0; i < blocks.size(); ++i) {
                if (offset[i] >= 0) {
                    Problem::retract(&trial[i], delta.segment(offset[i], Problem::local_size(blocks[i])));
                }
            }
            for (size_t p = 0; p < points.size(); ++p) {
                VecX et = points[p].g;
                for (const auto &[ida, ea] : points[p].strips) {
                    et.noalias() += ea.transpose() * delta.segment(offset[ida], ea.rows());
                }
                const VecX dp = point_factor[p].solve(-et);
                step_norm2 += dp.squaredNorm();
                Problem::retract(&trial[point_blocks[p]], dp);
            }

            const double trial_cost = eval_cost(trial);
            if (std::isfinite(trial_cost) && trial_cost < cost) {
                double x_norm2 = 0.0;
                for (const auto &b : blocks) x_norm2 += b.value.squaredNorm();
                const double drop = cost - trial_cost;
                blocks = std::move(trial);
                const double prev = cost;
                cost = trial_cost;
                lambda = std::max(lambda / 3.0, 1e-15);
                stepped = true;
                if (drop <= config.function_tolerance * prev) {
                    summary.reason = LmStop::FunctionTolerance;
                    converged = true;
                } else if (std::sqrt(step_norm2) <=
                           config.parameter_tolerance * (std::sqrt(x_norm2) + config.parameter_tolerance)) {
                    summary.reason = LmStop::ParameterTolerance;
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if (!stepped) {
            if (last_factor_failed) throw NumericalFailure("lm_minimize: normal equations unsolvable");
            summary.reason = LmStop::Stalled;
            summary.final_cost = cost;
            summary.iterations = it;
            return summary;
        }
    }
    if (!converged) summary.reason = LmStop::MaxIterations;
    summary.final_cost = cost;
    summary.iterations = it;
    return summary;
}

}  // namespace rigcal
