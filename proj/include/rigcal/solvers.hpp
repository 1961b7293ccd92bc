#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "rigcal/geometry.hpp"
#include "rigcal/types.hpp"

namespace rigcal {

struct Correspondence2D3D {
    Vec2 pixel;
    Vec3 point;
    std::int64_t point_id = -1;
};

// Observation with the principal point subtracted, as consumed by the radial
// solvers.
struct CenteredCorrespondence {
    Vec2 v;
    Vec3 point;
};

inline CenteredCorrespondence center_observation(const Correspondence2D3D &c, const Vec2 &principal_point) {
    return {c.pixel - principal_point, c.point};
}

struct UpgradeSolution {
    double focal = 0.0;
    double t_z = 0.0;
    DivisionModel division;
};

namespace detail {

// Dense polynomial helpers, coefficients in descending degree order.
inline std::vector<double> poly_mul(const std::vector<double> &p, const std::vector<double> &q) {
    std::vector<double> r(p.size() + q.size() - 1, 0.0);
    for (size_t i = 0; i < p.size(); ++i)
        for (size_t j = 0; j < q.size(); ++j) r[i + j] += p[i] * q[j];
    return r;
}

inline std::vector<double> poly_sub(std::vector<double> p, const std::vector<double> &q) {
    const size_t n = std::max(p.size(), q.size());
    std::vector<double> r(n, 0.0);
    for (size_t i = 0; i < p.size(); ++i) r[n - p.size() + i] = p[i];
    for (size_t i = 0; i < q.size(); ++i) r[n - q.size() + i] -= q[i];
    return r;
}

// Real roots via companion-matrix eigenvalues. Near-real complex roots
// (|imag| < 1e-8 |real|) are kept; vanishing leading coefficients reduce the
// degree.
inline std::vector<double> real_poly_roots(std::vector<double> coeffs) {
    double maxc = 0.0;
    for (double c : coeffs) maxc = std::max(maxc, std::abs(c));
    if (maxc == 0.0) return {};
    size_t lead = 0;
    while (lead + 1 < coeffs.size() && std::abs(coeffs[lead]) < 1e-14 * maxc) ++lead;
    coeffs.erase(coeffs.begin(), coeffs.begin() + lead);
    const int deg = static_cast<int>(coeffs.size()) - 1;
    if (deg < 1) return {};
    if (deg == 1) return {-coeffs[1] / coeffs[0]};

    MatX companion = MatX::Zero(deg, deg);
    for (int i = 0; i < deg; ++i) companion(0, i) = -coeffs[i + 1] / coeffs[0];
    companion.block(1, 0, deg - 1, deg - 1).setIdentity();
    Eigen::EigenSolver<MatX> es(companion);
    std::vector<double> roots;
    for (int i = 0; i < deg; ++i) {
        const double re = es.eigenvalues()(i).real();
        const double im = es.eigenvalues()(i).imag();
        if (std::abs(im) <= 1e-8 * std::max(1.0, std::abs(re))) roots.push_back(re);
    }
    return roots;
}

// Coefficients of the two row constraints (r1.r2 = 0 and |r1|^2 = |r2|^2) as
// conics in (alpha, beta) for the slice P = alpha*n1 + beta*n2 + n3, over the
// monomials [a^2, ab, a, b^2, b, 1].
inline Eigen::Matrix<double, 2, 6> conic_coefficients(const Vec4 n1[2], const Vec4 n2[2], const Vec4 n3[2]) {
    const Vec3 a1 = n1[0].head<3>(), a2 = n2[0].head<3>(), a3 = n3[0].head<3>();
    const Vec3 b1 = n1[1].head<3>(), b2 = n2[1].head<3>(), b3 = n3[1].head<3>();
    Eigen::Matrix<double, 2, 6> c;
    c.row(0) << a1.dot(b1), a1.dot(b2) + a2.dot(b1), a1.dot(b3) + a3.dot(b1), a2.dot(b2), a2.dot(b3) + a3.dot(b2),
        a3.dot(b3);
    c.row(1) << a1.dot(a1) - b1.dot(b1), 2.0 * (a1.dot(a2) - b1.dot(b2)), 2.0 * (a1.dot(a3) - b1.dot(b3)),
        a2.dot(a2) - b2.dot(b2), 2.0 * (a2.dot(a3) - b2.dot(b3)), a3.dot(a3) - b3.dot(b3);
    for (int r = 0; r < 2; ++r) {
        const double n = c.row(r).norm();
        if (n > 0) c.row(r) /= n;
    }
    return c;
}

// Largest relative radial misalignment sin(angle(u, v)) over the sample.
inline double max_radial_misalignment(const RadialPose &pose, const std::vector<CenteredCorrespondence> &corrs) {
    double worst = 0.0;
    for (const auto &c : corrs) {
        const Vec2 u = pose.apply(c.point);
        const double nu = u.norm(), nv = c.v.norm();
        if (nu <= kDomainEps || nv <= kDomainEps) return 1.0;
        worst = std::max(worst, std::abs(u.x() * c.v.y() - u.y() * c.v.x()) / (nu * nv));
    }
    return worst;
}

// Solves one affine slice of the null space; appends canonically normalized
// poses that satisfy all five radial constraints.
inline void solve_p5p_slice(const Eigen::Matrix<double, 8, 3> &basis, int pinned,
                            const std::vector<CenteredCorrespondence> &corrs, std::vector<RadialPose> *out) {
    int free1 = -1, free2 = -1;
    for (int k = 0; k < 3; ++k) {
        if (k == pinned) continue;
        (free1 < 0 ? free1 : free2) = k;
    }
    Vec4 n1[2], n2[2], n3[2];
    for (int row = 0; row < 2; ++row) {
        n1[row] = basis.block<4, 1>(4 * row, free1);
        n2[row] = basis.block<4, 1>(4 * row, free2);
        n3[row] = basis.block<4, 1>(4 * row, pinned);
    }
    const Eigen::Matrix<double, 2, 6> c = conic_coefficients(n1, n2, n3);

    // Both conics as quadratics in beta with alpha-polynomial coefficients;
    // the resultant res(q1, q2) = (a2 b0 - a0 b2)^2 - (a1 b0 - a0 b1)(a2 b1 - a1 b2)
    // is a quartic in alpha.
    const std::vector<double> a2 = {c(0, 3)}, b2 = {c(1, 3)};
    const std::vector<double> a1 = {c(0, 1), c(0, 4)}, b1 = {c(1, 1), c(1, 4)};
    const std::vector<double> a0 = {c(0, 0), c(0, 2), c(0, 5)}, b0 = {c(1, 0), c(1, 2), c(1, 5)};
    const std::vector<double> quartic =
        poly_sub(poly_mul(poly_sub(poly_mul(a2, b0), poly_mul(a0, b2)), poly_sub(poly_mul(a2, b0), poly_mul(a0, b2))),
                 poly_mul(poly_sub(poly_mul(a1, b0), poly_mul(a0, b1)), poly_sub(poly_mul(a2, b1), poly_mul(a1, b2))));

    for (double alpha : real_poly_roots(quartic)) {
        // Back-substitute beta from the null vector [b^3, b^2, b, 1] of the
        // 4x4 Sylvester matrix of the two quadratics at this alpha.
        Mat4 syl;
        syl << c(0, 3), c(0, 1) * alpha + c(0, 4), c(0, 0) * alpha * alpha + c(0, 2) * alpha + c(0, 5), 0, 0, c(0, 3),
            c(0, 1) * alpha + c(0, 4), c(0, 0) * alpha * alpha + c(0, 2) * alpha + c(0, 5), c(1, 3),
            c(1, 1) * alpha + c(1, 4), c(1, 0) * alpha * alpha + c(1, 2) * alpha + c(1, 5), 0, 0, c(1, 3),
            c(1, 1) * alpha + c(1, 4), c(1, 0) * alpha * alpha + c(1, 2) * alpha + c(1, 5);
        Eigen::JacobiSVD<Mat4> syl_svd(syl, Eigen::ComputeFullV);
        const Vec4 nv = syl_svd.matrixV().col(3);
        int denom = 1;
        for (int k = 2; k <= 3; ++k)
            if (std::abs(nv(k)) > std::abs(nv(denom))) denom = k;
        if (std::abs(nv(denom)) <= kDomainEps) continue;
        const double beta = nv(denom - 1) / nv(denom);

        Vec4 p1 = n1[0] * alpha + n2[0] * beta + n3[0];
        Vec4 p2 = n1[1] * alpha + n2[1] * beta + n3[1];
        const double s1 = p1.head<3>().norm(), s2 = p2.head<3>().norm();
        if (s1 <= kDomainEps || s2 <= kDomainEps) continue;
        p1 /= s1;
        p2 /= s2;
        Mat23 a;
        a.row(0) = p1.head<3>();
        a.row(1) = p2.head<3>();
        RadialPose pose = RadialPose::from_rows(a, Vec2(p1(3), p2(3)));

        // Sign from the majority side of the radial lines (points in front of
        // the camera project to the observed side, not the mirrored one).
        double vote = 0.0;
        for (const auto &cc : corrs) vote += (pose.apply(cc.point).dot(cc.v) > 0) ? 1.0 : -1.0;
        if (vote < 0) pose = pose.negated();

        if (max_radial_misalignment(pose, corrs) < 1e-6) out->push_back(pose);
    }
}

}  // namespace detail

// Minimal absolute pose from five 2D-3D correspondences under the radial
// alignment constraint: each observation pins the radial line of its point,
// independent of focal length and radial distortion. Returns up to four
// poses, each exact on the five constraints.
inline std::vector<RadialPose> solve_p5p_radial(const std::vector<CenteredCorrespondence> &corrs) {
    if (corrs.size() != 5) {
        throw DegenerateConfiguration("solve_p5p_radial: needs exactly 5 correspondences");
    }
    Eigen::Matrix<double, 5, 8> rac;
    for (int i = 0; i < 5; ++i) {
        const Vec4 xh = corrs[i].point.homogeneous();
        rac.row(i) << -corrs[i].v.y() * xh.transpose(), corrs[i].v.x() * xh.transpose();
    }
    Eigen::JacobiSVD<Eigen::Matrix<double, 5, 8>> svd(rac, Eigen::ComputeFullV);
    const auto &sv = svd.singularValues();
    if (sv(0) <= kDomainEps || sv(4) <= 1e-9 * sv(0)) {
        throw DegenerateConfiguration("solve_p5p_radial: rank-deficient constraint system");
    }
    const Eigen::Matrix<double, 8, 3> basis = svd.matrixV().rightCols<3>();

    // Affine slice with the last basis vector pinned to coefficient 1; if the
    // true solution has a vanishing component there, re-slice on the first.
    std::vector<RadialPose> poses;
    detail::solve_p5p_slice(basis, 2, corrs, &poses);
    if (poses.empty()) detail::solve_p5p_slice(basis, 0, corrs, &poses);
    return poses;
}

// Linear recovery of focal length, forward translation and division-model
// distortion given points in the camera frame known up to t_z. Each
// correspondence gives r (Z_z + t_z) = f * R * (1 + mu_1 r^2 + mu_2 r^4) with
// r = |v| and R = |Z_xy|, linear in (t_z, f, f mu_1, f mu_2).
inline std::vector<UpgradeSolution> solve_upgrade_linear(const std::vector<std::pair<Vec2, Vec3>> &corrs,
                                                         int n_dist) {
    if (n_dist < 0 || n_dist > 2) throw Error("solve_upgrade_linear: n_dist must be 0..2");
    const int unknowns = 2 + n_dist;
    const int n = static_cast<int>(corrs.size());
    if (n < unknowns) throw DegenerateConfiguration("solve_upgrade_linear: not enough correspondences");

    double rmax = 0.0;
    for (const auto &[v, z] : corrs) rmax = std::max(rmax, v.norm());
    if (rmax <= kDomainEps) throw DegenerateConfiguration("solve_upgrade_linear: all observations at the center");

    // Columns scaled so every entry is O(rmax); unknowns become
    // [t_z, f/s, f mu_1 s, f mu_2 s^3] with s = rmax.
    const double s = rmax;
    MatX a(n, unknowns);
    VecX b(n);
    for (int i = 0; i < n; ++i) {
        const double r = corrs[i].first.norm();
        const double radial = corrs[i].second.head<2>().norm();
        a(i, 0) = r;
        a(i, 1) = -radial * s;
        if (n_dist >= 1) a(i, 2) = -radial * r * r / s;
        if (n_dist >= 2) a(i, 3) = -radial * r * r * r * r / (s * s * s);
        b(i) = -r * corrs[i].second.z();
    }
    Eigen::JacobiSVD<MatX> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto &sv = svd.singularValues();
    if (sv(0) <= kDomainEps || sv(unknowns - 1) <= 1e-10 * sv(0)) {
        throw DegenerateConfiguration("solve_upgrade_linear: rank-deficient system");
    }
    const VecX y = svd.solve(b);

    UpgradeSolution sol;
    sol.t_z = y(0);
    sol.focal = y(1) * s;
    if (sol.focal <= 0.0) throw NoValidSolution("solve_upgrade_linear: negative focal length");
    sol.division.order = n_dist;
    if (n_dist >= 1) sol.division.mu[0] = y(2) / (sol.focal * s);
    if (n_dist >= 2) sol.division.mu[1] = y(3) / (sol.focal * s * s * s);
    if (!is_division_model_valid(sol.division, rmax)) {
        throw NoValidSolution("solve_upgrade_linear: non-monotone distortion");
    }
    int in_front = 0;
    for (const auto &[v, z] : corrs)
        if (z.z() + sol.t_z > 0) ++in_front;
    if (in_front < static_cast<int>(std::ceil(0.9 * n))) {
        throw NoValidSolution("solve_upgrade_linear: solution places points behind the camera");
    }
    return {sol};
}

// Closed-form rig pose from radial poses: given per-camera radial rig
// calibrations [A_i | b_i] and absolute radial poses [C_i | d_i] of the same
// frameset, recovers the rigid Q with A_i R_Q ~ C_i (orthogonal Procrustes
// over the stacked rows) and A_i t_Q = d_i - b_i (linear least squares).
inline RigidPose solve_rig_pose(const std::vector<std::pair<RadialPose, RadialPose>> &assigned) {
    const int n = static_cast<int>(assigned.size());
    if (n < 2) throw ParallelAxesDegenerate("solve_rig_pose: needs at least 2 cameras");

    MatX m(2 * n, 3), c(2 * n, 3);
    VecX rhs(2 * n);
    for (int i = 0; i < n; ++i) {
        m.middleRows<2>(2 * i) = assigned[i].first.row_block();
        c.middleRows<2>(2 * i) = assigned[i].second.row_block();
        rhs.segment<2>(2 * i) = assigned[i].second.translation_xy - assigned[i].first.translation_xy;
    }
    Eigen::JacobiSVD<MatX> cond(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (cond.singularValues()(0) <= kDomainEps ||
        cond.singularValues()(2) <= 1e-6 * cond.singularValues()(0)) {
        throw ParallelAxesDegenerate("solve_rig_pose: camera principal axes are (near) parallel");
    }

    const Mat3 k = m.transpose() * c;
    Eigen::JacobiSVD<Mat3> svd(k, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant();
    const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();

    const Vec3 t = cond.solve(rhs);
    return RigidPose(Rotation::from_matrix(r), t);
}

// Least-squares rigid alignment (rotation + translation, no scale) mapping
// source points onto target points.
inline RigidPose align_rigid(const std::vector<Vec3> &source, const std::vector<Vec3> &target,
                             const std::vector<double> *weights = nullptr) {
    const int n = static_cast<int>(source.size());
    if (n < 3 || target.size() != source.size()) {
        throw DegenerateConfiguration("align_rigid: needs >= 3 point pairs");
    }
    double wsum = 0.0;
    Vec3 cs = Vec3::Zero(), ct = Vec3::Zero();
    for (int i = 0; i < n; ++i) {
        const double w = weights ? (*weights)[i] : 1.0;
        cs += w * source[i];
        ct += w * target[i];
        wsum += w;
    }
    if (wsum <= kDomainEps) throw DegenerateConfiguration("align_rigid: zero total weight");
    cs /= wsum;
    ct /= wsum;

    Mat3 h = Mat3::Zero();
    for (int i = 0; i < n; ++i) {
        const double w = weights ? (*weights)[i] : 1.0;
        h += w * (source[i] - cs) * (target[i] - ct).transpose();
    }
    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues()(0) <= kDomainEps ||
        svd.singularValues()(1) <= 1e-9 * svd.singularValues()(0)) {
        throw DegenerateConfiguration("align_rigid: collinear configuration");
    }
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant();
    const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
    return RigidPose(Rotation::from_matrix(r), ct - r * cs);
}

}  // namespace rigcal
