// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/common.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <complex>
#include <optional>

namespace nodescope {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Exact DMD result: eigenvalues, continuous-time rates, unit spatial modes
/// (columns) and amplitudes fitted to the first snapshot.
struct DMDModes {
    ComplexVector eigenvalues;
    ComplexVector omegas;  // ln(lambda) / dt, in 1/seconds
    ComplexMatrix modes;   // S x r
    ComplexVector amplitudes;
    int rank = 0;
    double dt = 1.0;

    double power(Eigen::Index i) const { return std::norm(amplitudes(i)); }
    /// Cycles per second of mode i.
    double frequency(Eigen::Index i) const { return std::abs(omegas(i).imag()) / (2.0 * M_PI); }
};

struct DmdOptions {
    std::optional<int> rank;     // fixed truncation; otherwise chosen by energy
    double energy = 0.999;       // share of sum(sigma^2) to keep
    int max_rank = 64;
    double drop_ratio = 1e-12;   // singular values below drop_ratio * sigma_max are discarded
};

/// Exact DMD of an S x T snapshot matrix sampled every `dt` seconds.
inline DMDModes dmd(const Matrix& snapshots, double dt, const DmdOptions& opt = {}) {
    const auto s = snapshots.rows(), t = snapshots.cols();
    require(t >= 2, "DMD needs at least 2 snapshots");
    require(s >= 1, "DMD needs at least 1 spatial channel");
    require(dt > 0.0, "sample interval must be positive");
    require(snapshots.allFinite(), "DMD input contains non-finite values");

    DMDModes out;
    out.dt = dt;
    const Matrix x = snapshots.leftCols(t - 1);
    const Matrix xp = snapshots.rightCols(t - 1);
    Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sigma = svd.singularValues();
    if (sigma.size() == 0 || sigma(0) <= 0.0) return out;

    const auto cap = std::min<Eigen::Index>({s, t - 1, static_cast<Eigen::Index>(opt.max_rank)});
    Eigen::Index usable = 0;
    while (usable < sigma.size() && sigma(usable) > opt.drop_ratio * sigma(0)) ++usable;
    Eigen::Index r = 0;
    if (opt.rank) {
        r = std::min<Eigen::Index>(*opt.rank, usable);
    } else {
        const double total = sigma.squaredNorm();
        double acc = 0.0;
        while (r < usable) {
            acc += sigma(r) * sigma(r);
            ++r;
            if (acc >= opt.energy * total) break;
        }
    }
    r = std::min(r, cap);
    if (r == 0) return out;

    const Matrix u = svd.matrixU().leftCols(r);
    const Matrix v = svd.matrixV().leftCols(r);
    const Vector inv_sigma = sigma.head(r).cwiseInverse();
    const Matrix xp_v_sinv = xp * v * inv_sigma.asDiagonal();  // S x r
    const Matrix atilde = u.transpose() * xp_v_sinv;

    Eigen::EigenSolver<Matrix> es(atilde);
    out.eigenvalues = es.eigenvalues();
    const ComplexMatrix w = es.eigenvectors();
    out.modes = xp_v_sinv.cast<Complex>() * w;
    for (Eigen::Index i = 0; i < r; ++i) {
        double nrm = out.modes.col(i).norm();
        if (nrm <= 1e-12 * std::max(1.0, std::abs(out.eigenvalues(i)))) {
            // Zero eigenvalue: exact mode vanishes, fall back to the projected mode.
            out.modes.col(i) = u.cast<Complex>() * w.col(i);
            nrm = out.modes.col(i).norm();
        }
        out.modes.col(i) /= nrm;
    }
    out.amplitudes = out.modes.completeOrthogonalDecomposition().solve(snapshots.col(0).cast<Complex>());
    out.omegas.resize(r);
    for (Eigen::Index i = 0; i < r; ++i) {
        Complex lam = out.eigenvalues(i);
        if (std::abs(lam) < 1e-300) lam = Complex(1e-300, 0.0);
        out.omegas(i) = std::log(lam) / dt;
    }
    out.rank = static_cast<int>(r);
    return out;
}

/// Real part of sum_i phi_i b_i lambda_i^k for k = 0..steps-1.
inline Matrix dmd_reconstruct(const DMDModes& m, Eigen::Index rows, Eigen::Index steps) {
    Matrix out = Matrix::Zero(rows, steps);
    if (m.rank == 0) return out;
    ComplexVector coeff = m.amplitudes;
    for (Eigen::Index k = 0; k < steps; ++k) {
        out.col(k) = (m.modes * coeff).real();
        coeff = coeff.cwiseProduct(m.eigenvalues);
    }
    return out;
}

}  // namespace nodescope
