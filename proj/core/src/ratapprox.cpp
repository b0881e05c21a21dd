#include "fraclap/ratapprox.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "fraclap/errors.hpp"

namespace fraclap {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using cd = std::complex<double>;

std::vector<double> clustered_grid(int count) {
  // (j/N)^3 clusters algebraically at 0, matching the boundary layer of the
  // minimax error of x^s on [0,1].
  std::vector<double> g(count);
  for (int j = 0; j < count; ++j) {
    double t = double(j) / (count - 1);
    g[j] = t * t * t;
  }
  g.back() = 1.0;
  return g;
}

// Barycentric ratio with independent numerator/denominator weights. Support
// hits return the limit value alpha_j/beta_j.
double bary_ratio(const std::vector<double>& z, const VectorXd& alpha,
                  const VectorXd& beta, double x) {
  const int m = static_cast<int>(z.size());
  for (int j = 0; j < m; ++j) {
    if (x == z[j]) return alpha[j] / beta[j];
  }
  double num = 0, den = 0;
  for (int j = 0; j < m; ++j) {
    double c = 1.0 / (x - z[j]);
    num += alpha[j] * c;
    den += beta[j] * c;
  }
  return num / den;
}

struct BaryFit {
  std::vector<double> z;
  VectorXd alpha, beta;
  bool lawson_converged = true;
};

// Phase 1: greedy adaptive interpolation. Picks the worst sample as the next
// support point and re-solves the Loewner least-squares problem for the
// weights. Stops early once the interpolant is exact to rounding (the target
// is itself rational of lower type).
BaryFit adaptive_interpolation(const std::vector<double>& X,
                               const std::vector<double>& F, int max_support) {
  const int K = static_cast<int>(X.size());
  const double scale =
      std::abs(*std::max_element(F.begin(), F.end(), [](double p, double q) {
        return std::abs(p) < std::abs(q);
      }));
  std::vector<char> active(K, 1);
  std::vector<double> z, f;
  std::vector<double> R(K, 0.0);
  double mean = 0;
  for (double v : F) mean += v;
  mean /= K;
  std::fill(R.begin(), R.end(), mean);
  VectorXd w;

  while (static_cast<int>(z.size()) < max_support) {
    int kbest = -1;
    double ebest = -1;
    for (int k = 0; k < K; ++k) {
      if (!active[k]) continue;
      double e = std::abs(F[k] - R[k]);
      if (e > ebest) {
        ebest = e;
        kbest = k;
      }
    }
    if (kbest < 0 || (z.size() >= 2 && ebest <= 1e-13 * scale)) break;
    z.push_back(X[kbest]);
    f.push_back(F[kbest]);
    active[kbest] = 0;

    const int m = static_cast<int>(z.size());
    MatrixXd A(K - m, m);
    int row = 0;
    for (int k = 0; k < K; ++k) {
      if (!active[k]) continue;
      for (int j = 0; j < m; ++j) {
        A(row, j) = (F[k] - f[j]) / (X[k] - z[j]);
      }
      ++row;
    }
    Eigen::JacobiSVD<MatrixXd> svd(A, Eigen::ComputeThinV);
    w = svd.matrixV().col(m - 1);

    for (int k = 0; k < K; ++k) {
      if (!active[k]) continue;
      double num = 0, den = 0;
      for (int j = 0; j < m; ++j) {
        double c = w[j] / (X[k] - z[j]);
        num += c * f[j];
        den += c;
      }
      R[k] = num / den;
    }
  }

  const int m = static_cast<int>(z.size());
  BaryFit fit;
  fit.z = z;
  fit.alpha.resize(m);
  fit.beta.resize(m);
  for (int j = 0; j < m; ++j) {
    fit.alpha[j] = w[j] * f[j];
    fit.beta[j] = w[j];
  }
  return fit;
}

double grid_sup_error(const BaryFit& fit, const std::vector<double>& X,
                      const std::vector<double>& F) {
  double sup = 0;
  for (size_t k = 0; k < X.size(); ++k) {
    sup = std::max(sup,
                   std::abs(F[k] - bary_ratio(fit.z, fit.alpha, fit.beta, X[k])));
  }
  return sup;
}

// Phase 2: Lawson reweighting of the linearized residual f·D - N over the
// doubled weight vector [alpha; beta]. Keeps the best iterate by true grid
// sup error; convergence is declared when at least m+1 significant local
// error extrema agree in magnitude to spread_tol.
void lawson_refine(BaryFit& fit, const std::vector<double>& X,
                   const std::vector<double>& F, const FitOptions& opts) {
  const int m = static_cast<int>(fit.z.size());
  const int K = static_cast<int>(X.size());
  if (m < 2) return;

  // One row per sample, support points included. At a support point the
  // linearized residual degenerates to its limit f_j*beta_j - alpha_j, which
  // keeps the error there under Lawson control; without those rows the
  // largest extrema sit exactly at the (endpoint) support nodes unregulated.
  std::vector<int> sidx(K, -1);
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < m; ++j) {
      if (X[k] == fit.z[j]) {
        sidx[k] = j;
        break;
      }
    }
  }
  const int R = K;
  MatrixXd B(R, 2 * m);
  B.setZero();
  for (int k = 0; k < K; ++k) {
    if (sidx[k] >= 0) {
      B(k, sidx[k]) = -1.0;
      B(k, m + sidx[k]) = F[k];
    } else {
      for (int j = 0; j < m; ++j) {
        double c = 1.0 / (X[k] - fit.z[j]);
        B(k, j) = -c;
        B(k, m + j) = F[k] * c;
      }
    }
  }

  // Rows carry the linearized residual f*D - N, off from the true error by
  // the factor D(x) (by beta_j at a support point). Dividing rows by the
  // previous denominator makes the minimized quantity track the true error,
  // so the Lawson fixed point equalizes the actual extrema rather than the
  // linearized ones.
  auto denom_abs = [&](const VectorXd& beta, int k) {
    if (sidx[k] >= 0) return std::abs(beta[sidx[k]]);
    double d = 0;
    for (int j = 0; j < m; ++j) d += beta[j] / (X[k] - fit.z[j]);
    return std::abs(d);
  };
  VectorXd dprev(R);
  for (int r = 0; r < R; ++r) {
    dprev[r] = std::max(denom_abs(fit.beta, r), 1e-300);
  }

  // A vanishing denominator weight would make the stored barycentric values
  // alpha_j/beta_j meaningless; only iterates clear of that are kept.
  auto usable_beta = [](const VectorXd& beta) {
    return beta.cwiseAbs().minCoeff() > 1e-13 * beta.cwiseAbs().maxCoeff();
  };
  auto eval_signed = [&](const VectorXd& a, const VectorXd& b,
                         std::vector<double>& e) {
    double sup = 0;
    for (int k = 0; k < K; ++k) {
      e[k] = F[k] - bary_ratio(fit.z, a, b, X[k]);
      sup = std::max(sup, std::abs(e[k]));
    }
    return sup;
  };
  auto extrema_spread = [&](const std::vector<double>& e, double sup, int& cnt,
                            double& spread) {
    cnt = 0;
    double lo = std::numeric_limits<double>::max(), hi = 0;
    for (int k = 0; k < K; ++k) {
      double a0 = std::abs(e[k]);
      double ap = k > 0 ? std::abs(e[k - 1]) : 0;
      double an = k + 1 < K ? std::abs(e[k + 1]) : 0;
      if (a0 >= ap && a0 >= an && a0 >= 0.5 * sup) {
        ++cnt;
        lo = std::min(lo, a0);
        hi = std::max(hi, a0);
      }
    }
    spread = hi > 0 ? (hi - lo) / hi : 1.0;
  };

  VectorXd gamma = VectorXd::Ones(R);
  double best_sup = grid_sup_error(fit, X, F);
  VectorXd best_alpha = fit.alpha, best_beta = fit.beta;
  bool converged = false;

  std::vector<double> err(K);
  for (int sweep = 0; sweep < opts.max_lawson_sweeps; ++sweep) {
    MatrixXd WB = (gamma.cwiseSqrt().cwiseQuotient(dprev)).asDiagonal() * B;
    VectorXd colnorm = WB.colwise().norm();
    for (int j = 0; j < colnorm.size(); ++j) {
      colnorm[j] = std::max(colnorm[j], 1e-300);
    }
    MatrixXd Bs = WB * colnorm.cwiseInverse().asDiagonal();
    Eigen::JacobiSVD<MatrixXd> svd(Bs, Eigen::ComputeThinV);
    VectorXd u = colnorm.cwiseInverse().asDiagonal() *
                 svd.matrixV().col(2 * m - 1);
    VectorXd alpha = u.head(m), beta = u.tail(m);

    double sup = eval_signed(alpha, beta, err);
    bool usable = usable_beta(beta);
    if (sup < best_sup && usable) {
      best_sup = sup;
      best_alpha = alpha;
      best_beta = beta;
    }

    int extrema = 0;
    double spread = 1.0;
    extrema_spread(err, sup, extrema, spread);
    if (extrema >= m + 1 && spread < opts.spread_tol) {
      // Keep the equioscillating iterate itself so the stored fit carries
      // the property the flag reports.
      if (usable) {
        best_sup = sup;
        best_alpha = alpha;
        best_beta = beta;
      }
      converged = usable;
      break;
    }

    for (int r = 0; r < R; ++r) {
      gamma[r] *= std::max(std::abs(err[r]), 1e-300);
    }
    gamma /= gamma.maxCoeff();
    for (int r = 0; r < R; ++r) {
      dprev[r] = std::max(denom_abs(beta, r), 1e-300);
    }
  }

  // Reference-correction polish. Lawson alone can orbit the fixed point
  // without settling; from its best iterate, equalizing the error on an
  // alternating reference set of 2m extrema is a small generalized
  // eigenproblem and converges in a few steps when it converges at all.
  VectorXd cur_a = best_alpha, cur_b = best_beta;
  for (int it = 0; it < 12 && !converged; ++it) {
    double sup = eval_signed(cur_a, cur_b, err);
    int cnt = 0;
    double spread = 1.0;
    extrema_spread(err, sup, cnt, spread);
    if (cnt >= m + 1 && spread < opts.spread_tol) {
      if (usable_beta(cur_b)) {
        best_sup = sup;
        best_alpha = cur_a;
        best_beta = cur_b;
        converged = true;
      }
      break;
    }

    struct Ref {
      int k;
      double lvl;
      int sgn;
    };
    std::vector<Ref> alt;
    for (int k = 0; k < K; ++k) {
      double a0 = std::abs(err[k]);
      double ap = k > 0 ? std::abs(err[k - 1]) : 0;
      double an = k + 1 < K ? std::abs(err[k + 1]) : 0;
      if (a0 >= ap && a0 >= an && a0 > 0) {
        Ref rf{k, a0, err[k] > 0 ? 1 : -1};
        if (!alt.empty() && alt.back().sgn == rf.sgn) {
          if (rf.lvl > alt.back().lvl) alt.back() = rf;
        } else {
          alt.push_back(rf);
        }
      }
    }
    while (static_cast<int>(alt.size()) > 2 * m) {
      int imin = 0;
      for (int i = 1; i < static_cast<int>(alt.size()); ++i) {
        if (alt[i].lvl < alt[imin].lvl) imin = i;
      }
      alt.erase(alt.begin() + imin);
      if (imin > 0 && imin < static_cast<int>(alt.size()) &&
          alt[imin - 1].sgn == alt[imin].sgn) {
        int drop = alt[imin - 1].lvl < alt[imin].lvl ? imin - 1 : imin;
        alt.erase(alt.begin() + drop);
      }
    }
    if (static_cast<int>(alt.size()) != 2 * m) break;

    // r(x_i) = f(x_i) - s_i*level on the reference, linear in [alpha; beta]
    // once the level is moved to the right-hand pencil.
    MatrixXd A0 = MatrixXd::Zero(2 * m, 2 * m);
    MatrixXd B1 = MatrixXd::Zero(2 * m, 2 * m);
    for (int i = 0; i < 2 * m; ++i) {
      int k = alt[i].k;
      double sg = alt[i].sgn;
      if (sidx[k] >= 0) {
        A0(i, sidx[k]) = 1.0;
        A0(i, m + sidx[k]) = -F[k];
        B1(i, m + sidx[k]) = -sg;
      } else {
        for (int j = 0; j < m; ++j) {
          double c = 1.0 / (X[k] - fit.z[j]);
          A0(i, j) = c;
          A0(i, m + j) = -F[k] * c;
          B1(i, m + j) = -sg * c;
        }
      }
    }
    // Balance the pencil: Cauchy entries span the squared interval ratio,
    // and QZ accuracy degrades without it.
    for (int i = 0; i < 2 * m; ++i) {
      double s0 = std::max(A0.row(i).cwiseAbs().maxCoeff(),
                           B1.row(i).cwiseAbs().maxCoeff());
      if (s0 > 0) {
        A0.row(i) /= s0;
        B1.row(i) /= s0;
      }
    }
    VectorXd cscale(2 * m);
    for (int j = 0; j < 2 * m; ++j) {
      double s0 = std::max(A0.col(j).cwiseAbs().maxCoeff(),
                           B1.col(j).cwiseAbs().maxCoeff());
      cscale[j] = s0 > 0 ? 1.0 / s0 : 1.0;
      A0.col(j) *= cscale[j];
      B1.col(j) *= cscale[j];
    }
    Eigen::GeneralizedEigenSolver<MatrixXd> ges;
    ges.compute(A0, B1, true);
    if (ges.info() != Eigen::Success) break;
    int pick = -1;
    double dist = std::numeric_limits<double>::max();
    for (int i = 0; i < 2 * m; ++i) {
      if (std::abs(ges.betas()[i]) < 1e-300) continue;
      cd lam = ges.alphas()[i] / ges.betas()[i];
      if (std::abs(lam.imag()) > 1e-8 * std::abs(lam.real())) continue;
      if (!(lam.real() > 0)) continue;
      double d = std::abs(lam.real() - sup);
      if (d < dist) {
        dist = d;
        pick = i;
      }
    }
    if (pick < 0) break;
    Eigen::VectorXcd vc = ges.eigenvectors().col(pick);
    int big = 0;
    for (int i = 1; i < vc.size(); ++i) {
      if (std::abs(vc[i]) > std::abs(vc[big])) big = i;
    }
    vc *= std::conj(vc[big]) / std::abs(vc[big]);
    VectorXd cand_a = vc.head(m).real().cwiseProduct(cscale.head(m));
    VectorXd cand_b = vc.tail(m).real().cwiseProduct(cscale.tail(m));
    if (!usable_beta(cand_b)) break;

    double sup_cand = eval_signed(cand_a, cand_b, err);
    if (sup_cand > 1.5 * best_sup) break;
    cur_a = cand_a;
    cur_b = cand_b;
    if (sup_cand < best_sup) {
      best_sup = sup_cand;
      best_alpha = cand_a;
      best_beta = cand_b;
    }
  }

  fit.alpha = best_alpha;
  fit.beta = best_beta;
  fit.lawson_converged = converged;
}

std::vector<cd> poles_of(const BaryFit& fit, double interval_b) {
  const int m = static_cast<int>(fit.z.size());
  if (m < 2) return {};
  MatrixXd E = MatrixXd::Zero(m + 1, m + 1);
  MatrixXd Bm = MatrixXd::Zero(m + 1, m + 1);
  for (int j = 0; j < m; ++j) {
    E(0, j + 1) = fit.beta[j];
    E(j + 1, 0) = 1.0;
    E(j + 1, j + 1) = fit.z[j];
    Bm(j + 1, j + 1) = 1.0;
  }
  Eigen::GeneralizedEigenSolver<MatrixXd> ges;
  ges.compute(E, Bm, false);
  if (ges.info() != Eigen::Success) {
    throw NumericError("rational fit: pole eigenproblem failed");
  }

  // The pencil has exactly two spectral directions at infinity; drop the two
  // smallest |beta| entries, then screen out any near-infinite stragglers
  // (their contribution on [a,b] is a constant absorbed by R0).
  std::vector<int> idx(m + 1);
  for (int i = 0; i <= m; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](int p, int q) {
    return std::abs(ges.betas()[p]) > std::abs(ges.betas()[q]);
  });
  std::vector<cd> poles;
  for (int i = 0; i < m - 1; ++i) {
    int k = idx[i];
    if (ges.betas()[k] == 0.0) continue;
    cd t = ges.alphas()[k] / ges.betas()[k];
    if (std::abs(t) > 1e10 * std::max(1.0, interval_b)) continue;
    // Polish the QZ estimate on D(t) = 0; conditioning of the arrowhead
    // pencil costs a few digits on wide intervals and Newton gets them back.
    for (int it = 0; it < 6; ++it) {
      cd d = 0, dp = 0;
      for (int j = 0; j < m; ++j) {
        cd c = 1.0 / (t - fit.z[j]);
        d += fit.beta[j] * c;
        dp -= fit.beta[j] * c * c;
      }
      if (std::abs(dp) == 0.0) break;
      cd step = d / dp;
      t -= step;
      if (std::abs(step) <= 1e-15 * std::abs(t)) break;
    }
    poles.push_back(t);
  }
  return poles;
}

void snap_and_pair(std::vector<cd>& poles, std::vector<cd>& residues,
                   double scale) {
  std::vector<std::pair<cd, cd>> reals, pos, neg;
  for (size_t i = 0; i < poles.size(); ++i) {
    cd t = poles[i], r = residues[i];
    if (std::abs(t.imag()) <= 1e-10 * (std::abs(t.real()) + scale)) {
      reals.push_back({cd(t.real(), 0.0), cd(r.real(), 0.0)});
    } else if (t.imag() > 0) {
      pos.push_back({t, r});
    } else {
      neg.push_back({std::conj(t), std::conj(r)});
    }
  }
  auto by_re = [](const std::pair<cd, cd>& p, const std::pair<cd, cd>& q) {
    if (p.first.real() != q.first.real())
      return p.first.real() < q.first.real();
    return p.first.imag() < q.first.imag();
  };
  std::sort(reals.begin(), reals.end(), by_re);
  std::sort(pos.begin(), pos.end(), by_re);
  std::sort(neg.begin(), neg.end(), by_re);

  poles.clear();
  residues.clear();
  for (auto& p : reals) {
    poles.push_back(p.first);
    residues.push_back(p.second);
  }
  size_t pairs = std::min(pos.size(), neg.size());
  for (size_t i = 0; i < pairs; ++i) {
    cd t = 0.5 * (pos[i].first + neg[i].first);
    cd r = 0.5 * (pos[i].second + neg[i].second);
    poles.push_back(t);
    residues.push_back(r);
    poles.push_back(std::conj(t));
    residues.push_back(std::conj(r));
  }
  // An unpaired complex pole can only be rounding noise; force it real.
  for (size_t i = pairs; i < std::max(pos.size(), neg.size()); ++i) {
    auto& p = i < pos.size() ? pos[i] : neg[i];
    poles.push_back(cd(p.first.real(), 0.0));
    residues.push_back(cd(p.second.real(), 0.0));
  }
}

void to_partial_fractions(RationalApprox& r, const BaryFit& fit) {
  const int m = static_cast<int>(fit.z.size());
  std::vector<cd> poles = poles_of(fit, r.b);
  std::vector<cd> residues(poles.size());
  for (size_t i = 0; i < poles.size(); ++i) {
    cd t = poles[i], num = 0, dden = 0;
    for (int j = 0; j < m; ++j) {
      cd c = 1.0 / (t - fit.z[j]);
      num += fit.alpha[j] * c;
      dden -= fit.beta[j] * c * c;
    }
    residues[i] = num / dden;
  }
  snap_and_pair(poles, residues, r.b);

  r.support = fit.z;
  r.weights.resize(m);
  r.values.resize(m);
  for (int j = 0; j < m; ++j) {
    r.weights[j] = fit.beta[j];
    r.values[j] = fit.alpha[j] / fit.beta[j];
  }
  r.poles = poles;
  r.residues = residues;
  r.n = static_cast<int>(poles.size());
  r.lawson_converged = fit.lawson_converged;

  // r(x) - sum of pole terms is constant up to rounding; read it off far
  // from the poles where the barycentric form is well conditioned.
  double xfar = r.b * 1e3;
  cd tail = 0;
  for (size_t i = 0; i < poles.size(); ++i) {
    tail += residues[i] / (xfar - poles[i]);
  }
  r.R0 = bary_ratio(fit.z, fit.alpha, fit.beta, xfar) - tail.real();
}

std::vector<double> validation_grid(const RationalApprox& r, int count) {
  if (r.a > 0) return sample_grid(r.a, r.b, count);
  std::vector<double> g = clustered_grid(count);
  for (double& x : g) x *= r.b;
  return g;
}

bool real_pole_inside(const RationalApprox& r) {
  for (const cd& t : r.poles) {
    if (t.imag() == 0 && t.real() >= r.a && t.real() <= r.b) return true;
  }
  return false;
}

RationalApprox fit_impl(double s, double a, double b, int n, int power_sign,
                        std::vector<double> X, const FitOptions& opts) {
  RationalApprox r;
  r.s = s;
  r.a = a;
  r.b = b;
  r.power_sign = power_sign;

  if (power_sign < 0 && s == 1.0) {
    // x^{-1} is itself rational; the best approximation is exact and the
    // alternation characterization degenerates. Return 1/x directly so the
    // downstream solve reduces to one unshifted linear solve.
    r.n = 1;
    r.R0 = 0.0;
    r.poles = {cd(0.0, 0.0)};
    r.residues = {cd(1.0, 0.0)};
    r.support = {a, b};
    r.weights = {a, -b};
    r.values = {1.0 / a, 1.0 / b};
    r.lawson_converged = true;
    std::vector<double> V = validation_grid(r, opts.validation_count);
    double sup = 0;
    for (double x : V) sup = std::max(sup, std::abs(r.target(x) - eval(r, x)));
    r.achieved_sup_error = sup;
    return r;
  }

  std::vector<double> F(X.size());
  for (size_t k = 0; k < X.size(); ++k) F[k] = r.target(X[k]);

  BaryFit fit = adaptive_interpolation(X, F, n + 1);
  double scale = 0;
  for (double v : F) scale = std::max(scale, std::abs(v));
  if (grid_sup_error(fit, X, F) > 1e-13 * scale) {
    lawson_refine(fit, X, F, opts);
  }
  to_partial_fractions(r, fit);

  if (real_pole_inside(r)) {
    // Spurious pole-zero pair: retire the weakest support point and refit
    // the remaining interpolant once.
    int jmin = 0;
    for (int j = 1; j < static_cast<int>(fit.z.size()); ++j) {
      if (std::abs(fit.beta[j]) < std::abs(fit.beta[jmin])) jmin = j;
    }
    fit.z.erase(fit.z.begin() + jmin);
    // Rebuild weights by plain least squares on the reduced support.
    std::vector<double> zf = fit.z;
    std::vector<double> fv(zf.size());
    for (size_t j = 0; j < zf.size(); ++j) fv[j] = r.target(zf[j]);
    const int m = static_cast<int>(zf.size());
    MatrixXd A(X.size(), m);
    for (size_t k = 0; k < X.size(); ++k) {
      for (int j = 0; j < m; ++j) {
        double dx = X[k] - zf[j];
        A(k, j) = dx == 0 ? 0.0 : (F[k] - fv[j]) / dx;
      }
    }
    Eigen::JacobiSVD<MatrixXd> svd(A, Eigen::ComputeThinV);
    VectorXd w = svd.matrixV().col(m - 1);
    fit.alpha.resize(m);
    fit.beta.resize(m);
    for (int j = 0; j < m; ++j) {
      fit.alpha[j] = w[j] * fv[j];
      fit.beta[j] = w[j];
    }
    lawson_refine(fit, X, F, opts);
    to_partial_fractions(r, fit);
    if (real_pole_inside(r)) {
      throw NumericError("rational fit: pole inside the fit interval");
    }
  }

  std::vector<double> V = validation_grid(r, opts.validation_count);
  double sup = 0;
  for (double x : V) sup = std::max(sup, std::abs(r.target(x) - eval(r, x)));
  r.achieved_sup_error = sup;
  return r;
}

}  // namespace

double RationalApprox::target(double x) const {
  return power_sign < 0 ? std::pow(x, -s) : std::pow(x, s);
}

double RationalApprox::eval_barycentric(double x) const {
  const int m = static_cast<int>(support.size());
  for (int j = 0; j < m; ++j) {
    if (x == support[j]) return values[j];
  }
  double num = 0, den = 0;
  for (int j = 0; j < m; ++j) {
    double c = weights[j] / (x - support[j]);
    num += c * values[j];
    den += c;
  }
  return num / den;
}

std::vector<double> sample_grid(double a, double b, int count) {
  if (!(a > 0) || !(a < b)) {
    throw InvalidInput("sample_grid: requires 0 < a < b");
  }
  if (count < 2) throw InvalidInput("sample_grid: requires count >= 2");
  std::vector<double> g(count);
  double ratio = std::log(b / a);
  for (int i = 0; i < count; ++i) {
    g[i] = a * std::exp(ratio * (double(i) / (count - 1)));
  }
  g.front() = a;
  g.back() = b;
  return g;
}

RationalApprox fit_best(double s, double a, double b, int n,
                        const FitOptions& opts) {
  if (!(s > 0) || s > 1) throw InvalidInput("fit_best: requires s in (0, 1]");
  if (n < 1 || n > 24) throw InvalidInput("fit_best: requires 1 <= n <= 24");
  std::vector<double> X = sample_grid(a, b, opts.sample_count);
  return fit_impl(s, a, b, n, -1, std::move(X), opts);
}

RationalApprox fit_positive_power(double s, int n, const FitOptions& opts) {
  if (!(s > 0) || !(s < 1)) {
    throw InvalidInput("fit_positive_power: requires s in (0, 1)");
  }
  if (n < 1 || n > 24) {
    throw InvalidInput("fit_positive_power: requires 1 <= n <= 24");
  }
  return fit_impl(s, 0.0, 1.0, n, +1, clustered_grid(opts.sample_count), opts);
}

double eval(const RationalApprox& r, double x) {
  cd acc = r.R0;
  for (size_t i = 0; i < r.poles.size(); ++i) {
    cd d = x - r.poles[i];
    if (std::abs(d) < 1e-300) {
      throw NumericError("rational eval: argument hits a pole");
    }
    acc += r.residues[i] / d;
  }
  return acc.real();
}

double sup_error(RationalApprox& r, int grid_size) {
  if (grid_size < 2) throw InvalidInput("sup_error: requires grid_size >= 2");
  RationalApprox& rr = r;
  std::vector<double> V = validation_grid(rr, grid_size);
  double sup = 0;
  for (double x : V) sup = std::max(sup, std::abs(r.target(x) - eval(r, x)));
  r.achieved_sup_error = sup;
  return sup;
}

double stahl_reference(double s, int n) {
  return std::pow(4.0, 1.0 + s) * std::abs(std::sin(M_PI * s)) *
         std::exp(-2.0 * M_PI * std::sqrt(s * n));
}

std::string rational_to_json(const RationalApprox& r) {
  nlohmann::json j;
  j["s"] = r.s;
  j["a"] = r.a;
  j["b"] = r.b;
  j["n"] = r.n;
  j["R0"] = r.R0;
  auto cvec = [](const std::vector<cd>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const cd& c : v) arr.push_back({{"re", c.real()}, {"im", c.imag()}});
    return arr;
  };
  j["poles"] = cvec(r.poles);
  j["residues"] = cvec(r.residues);
  j["sup_error"] = r.achieved_sup_error;
  return j.dump(2);
}

RationalApprox rational_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("rational approx JSON: ") + e.what());
  }
  RationalApprox r;
  try {
    r.s = j.at("s").get<double>();
    r.a = j.at("a").get<double>();
    r.b = j.at("b").get<double>();
    r.n = j.at("n").get<int>();
    r.R0 = j.at("R0").get<double>();
    auto cvec = [](const nlohmann::json& arr) {
      std::vector<cd> v;
      for (const auto& e : arr) {
        v.emplace_back(e.at("re").get<double>(), e.at("im").get<double>());
      }
      return v;
    };
    r.poles = cvec(j.at("poles"));
    r.residues = cvec(j.at("residues"));
    r.achieved_sup_error = j.at("sup_error").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("rational approx JSON: ") + e.what());
  }
  if (r.poles.size() != r.residues.size()) {
    throw ParseError("rational approx JSON: poles/residues length mismatch");
  }
  return r;
}

}  // namespace fraclap
