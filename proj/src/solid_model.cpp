#include "varislip/solid_model.hpp"

#include <cmath>

namespace varislip {

namespace {
const double kSqrt2 = std::sqrt(2.0);

struct SecondDerivs {
  Vec xx_x, xy_x, yy_x;  // component x
  Vec xx_y, xy_y, yy_y;  // component y
};

SecondDerivs second_derivs(const DeformationField& eta) {
  const DiffOps& d = eta.ops();
  const Field2& p = eta.positions();
  SecondDerivs s;
  s.xx_x = d.dxx * p.x;
  s.xy_x = d.dxy * p.x;
  s.yy_x = d.dyy * p.x;
  s.xx_y = d.dxx * p.y;
  s.xy_y = d.dxy * p.y;
  s.yy_y = d.dyy * p.y;
  return s;
}

double seminorm_sq(const DiffOps::HighOrder& ho, const Field2& f, const Vec& w) {
  double v = 0.0;
  for (size_t p = 0; p < ho.ops.size(); ++p) {
    Vec ax = ho.ops[p] * f.x;
    Vec ay = ho.ops[p] * f.y;
    v += ho.multiplicity[p] * (ax.cwiseAbs2().dot(w) + ay.cwiseAbs2().dot(w));
  }
  return v;
}

void seminorm_sq_gradient(const DiffOps::HighOrder& ho, const Field2& f, const Vec& w,
                          double scale, Field2& grad) {
  for (size_t p = 0; p < ho.ops.size(); ++p) {
    const double c = 2.0 * scale * ho.multiplicity[p];
    grad.x += c * (ho.ops[p].transpose() * w.cwiseProduct(ho.ops[p] * f.x).eval());
    grad.y += c * (ho.ops[p].transpose() * w.cwiseProduct(ho.ops[p] * f.y).eval());
  }
}

// Pointwise strain density and its dF at one node.
// s = (1/8) m' C m with m = (C11-1, C22-1, sqrt2 C12), C = F'F.
double strain_density(const Mat2& F, const Eigen::Matrix3d& elt, Mat2* dF) {
  const Mat2 C = F.transpose() * F;
  Eigen::Vector3d m(C(0, 0) - 1.0, C(1, 1) - 1.0, kSqrt2 * C(0, 1));
  Eigen::Vector3d cm = elt * m;
  const double s = 0.125 * m.dot(cm);
  if (dF) {
    Mat2 S;  // ds = S : dC, dC symmetric
    S(0, 0) = 0.25 * cm(0);
    S(1, 1) = 0.25 * cm(1);
    S(0, 1) = S(1, 0) = 0.25 * cm(2) / kSqrt2;
    *dF = 2.0 * F * S;
  }
  return s;
}

}  // namespace

void MaterialParams::validate() const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(elastic_tensor);
  if (es.eigenvalues().minCoeff() <= 0)
    throw ValidationError("MaterialParams: elastic_tensor must be positive definite");
  if (rho_s <= 0) throw ValidationError("MaterialParams: rho_s must be positive");
  if (model == EnergyModel::ModelCase) {
    const double q = grad2_exponent;
    if (q <= 2.0) throw ValidationError("MaterialParams: grad2_exponent must exceed 2");
    if (det_exponent <= 2.0 * q / (q - 2.0))
      throw ValidationError("MaterialParams: det_exponent must exceed 2q/(q-2)");
  }
}

EnergyBreakdown eval_energy(const DeformationField& eta, const MaterialParams& mat,
                            const RegularizerConfig& reg) {
  const SolidGrid& g = eta.grid();
  const Vec& w = g.node_weight;
  EnergyBreakdown out;

  const auto& kin = eta.kinematics();
  if (mat.model == EnergyModel::ModelCase && kin.det.minCoeff() <= 0.0)
    throw DegenerateJacobian("eval_energy: det(grad eta) <= 0 at a quadrature point");

  for (int n = 0; n < g.node_count(); ++n) {
    const Mat2 F = kin.F(n);
    out.strain_term += w[n] * strain_density(F, mat.elastic_tensor, nullptr);
    if (mat.model == EnergyModel::ModelCase)
      out.det_term += w[n] * std::pow(kin.det[n], -mat.det_exponent);
  }

  if (mat.model == EnergyModel::ModelCase) {
    const SecondDerivs s = second_derivs(eta);
    const double q = mat.grad2_exponent;
    for (int n = 0; n < g.node_count(); ++n) {
      const double g2 = s.xx_x[n] * s.xx_x[n] + 2.0 * s.xy_x[n] * s.xy_x[n] +
                        s.yy_x[n] * s.yy_x[n] + s.xx_y[n] * s.xx_y[n] +
                        2.0 * s.xy_y[n] * s.xy_y[n] + s.yy_y[n] * s.yy_y[n];
      if (g2 > 0) out.grad2_term += w[n] * (1.0 / q) * std::pow(g2, 0.5 * q);
    }
  }

  if (reg.kappa > 0) {
    const auto ho = eta.ops().high_order(g, reg.order);
    out.regularizer_term = std::pow(reg.kappa, reg.a0) * seminorm_sq(ho, eta.positions(), w);
  }

  out.total = out.strain_term + out.det_term + out.grad2_term + out.regularizer_term;
  return out;
}

Field2 energy_gradient(const DeformationField& eta, const MaterialParams& mat,
                       const RegularizerConfig& reg) {
  const SolidGrid& g = eta.grid();
  const DiffOps& d = eta.ops();
  const Vec& w = g.node_weight;
  const int n = g.node_count();

  const auto& kin = eta.kinematics();
  if (mat.model == EnergyModel::ModelCase && kin.det.minCoeff() <= 0.0)
    throw DegenerateJacobian("energy_gradient: det(grad eta) <= 0 at a quadrature point");

  // dDensity/dF arrays (strain + det barrier)
  Vec p11 = Vec::Zero(n), p12 = Vec::Zero(n), p21 = Vec::Zero(n), p22 = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    const Mat2 F = kin.F(i);
    Mat2 dF;
    strain_density(F, mat.elastic_tensor, &dF);
    if (mat.model == EnergyModel::ModelCase) {
      const double c = -mat.det_exponent * std::pow(kin.det[i], -mat.det_exponent - 1.0);
      dF += c * cofactor(F);
    }
    p11[i] = dF(0, 0);
    p12[i] = dF(0, 1);
    p21[i] = dF(1, 0);
    p22[i] = dF(1, 1);
  }

  Field2 grad(n);
  grad.x = d.dx.transpose() * w.cwiseProduct(p11).eval() +
           d.dy.transpose() * w.cwiseProduct(p12).eval();
  grad.y = d.dx.transpose() * w.cwiseProduct(p21).eval() +
           d.dy.transpose() * w.cwiseProduct(p22).eval();

  if (mat.model == EnergyModel::ModelCase) {
    const SecondDerivs s = second_derivs(eta);
    const double q = mat.grad2_exponent;
    Vec gxx_x(n), gxy_x(n), gyy_x(n), gxx_y(n), gxy_y(n), gyy_y(n);
    for (int i = 0; i < n; ++i) {
      const double g2 = s.xx_x[i] * s.xx_x[i] + 2.0 * s.xy_x[i] * s.xy_x[i] +
                        s.yy_x[i] * s.yy_x[i] + s.xx_y[i] * s.xx_y[i] +
                        2.0 * s.xy_y[i] * s.xy_y[i] + s.yy_y[i] * s.yy_y[i];
      const double c = (g2 > 0) ? std::pow(g2, 0.5 * q - 1.0) : 0.0;
      gxx_x[i] = c * s.xx_x[i];
      gxy_x[i] = 2.0 * c * s.xy_x[i];
      gyy_x[i] = c * s.yy_x[i];
      gxx_y[i] = c * s.xx_y[i];
      gxy_y[i] = 2.0 * c * s.xy_y[i];
      gyy_y[i] = c * s.yy_y[i];
    }
    grad.x += d.dxx.transpose() * w.cwiseProduct(gxx_x).eval() +
              d.dxy.transpose() * w.cwiseProduct(gxy_x).eval() +
              d.dyy.transpose() * w.cwiseProduct(gyy_x).eval();
    grad.y += d.dxx.transpose() * w.cwiseProduct(gxx_y).eval() +
              d.dxy.transpose() * w.cwiseProduct(gxy_y).eval() +
              d.dyy.transpose() * w.cwiseProduct(gyy_y).eval();
  }

  if (reg.kappa > 0) {
    const auto ho = d.high_order(g, reg.order);
    seminorm_sq_gradient(ho, eta.positions(), w, std::pow(reg.kappa, reg.a0), grad);
  }
  return grad;
}

namespace {

// S(b) = (Db)'F + F'(Db) at every node; returns |S|^2 sum and optionally dR/d(Db).
double r_quadrature(const DeformationField& anchor, const Field2& rate, Vec* q11, Vec* q12,
                    Vec* q21, Vec* q22) {
  const SolidGrid& g = anchor.grid();
  const DiffOps& d = anchor.ops();
  const Vec& w = g.node_weight;
  const auto& kin = anchor.kinematics();

  Vec gx_x = d.dx * rate.x, gy_x = d.dy * rate.x;
  Vec gx_y = d.dx * rate.y, gy_y = d.dy * rate.y;

  double total = 0.0;
  for (int i = 0; i < g.node_count(); ++i) {
    const Mat2 F = kin.F(i);
    Mat2 G;
    G << gx_x[i], gy_x[i], gx_y[i], gy_y[i];
    const Mat2 S = G.transpose() * F + F.transpose() * G;
    total += w[i] * (S(0, 0) * S(0, 0) + 2.0 * S(0, 1) * S(0, 1) + S(1, 1) * S(1, 1));
    if (q11) {
      const Mat2 Q = 4.0 * F * S;
      (*q11)[i] = Q(0, 0);
      (*q12)[i] = Q(0, 1);
      (*q21)[i] = Q(1, 0);
      (*q22)[i] = Q(1, 1);
    }
  }
  return total;
}

}  // namespace

DissipationParts eval_dissipation_parts(const DeformationField& eta_anchor, const Field2& rate,
                                        const MaterialParams&, const RegularizerConfig& reg) {
  if (rate.size() != eta_anchor.grid().node_count())
    throw ValidationError("eval_dissipation: rate shape does not match grid");
  DissipationParts parts;
  parts.r_term = r_quadrature(eta_anchor, rate, nullptr, nullptr, nullptr, nullptr);
  if (reg.kappa > 0) {
    const auto ho = eta_anchor.ops().high_order(eta_anchor.grid(), reg.order);
    parts.regularizer_term = reg.kappa * seminorm_sq(ho, rate, eta_anchor.grid().node_weight);
  }
  return parts;
}

double eval_dissipation(const DeformationField& eta_anchor, const Field2& rate,
                        const MaterialParams& mat, const RegularizerConfig& reg) {
  return eval_dissipation_parts(eta_anchor, rate, mat, reg).total();
}

Field2 dissipation_gradient(const DeformationField& eta_anchor, const Field2& rate,
                            const MaterialParams&, const RegularizerConfig& reg) {
  const SolidGrid& g = eta_anchor.grid();
  const DiffOps& d = eta_anchor.ops();
  const Vec& w = g.node_weight;
  const int n = g.node_count();
  if (rate.size() != n) throw ValidationError("dissipation_gradient: rate shape mismatch");

  Vec q11(n), q12(n), q21(n), q22(n);
  r_quadrature(eta_anchor, rate, &q11, &q12, &q21, &q22);

  Field2 grad(n);
  grad.x = d.dx.transpose() * w.cwiseProduct(q11).eval() +
           d.dy.transpose() * w.cwiseProduct(q12).eval();
  grad.y = d.dx.transpose() * w.cwiseProduct(q21).eval() +
           d.dy.transpose() * w.cwiseProduct(q22).eval();

  if (reg.kappa > 0) {
    const auto ho = d.high_order(g, reg.order);
    seminorm_sq_gradient(ho, rate, w, reg.kappa, grad);
  }
  return grad;
}

double grad_l2_sq(const DeformationField& eta1, const DeformationField& eta0) {
  const auto& k1 = eta1.kinematics();
  const auto& k0 = eta0.kinematics();
  const Vec& w = eta1.grid().node_weight;
  double v = 0.0;
  v += (k1.fxx - k0.fxx).cwiseAbs2().dot(w);
  v += (k1.fxy - k0.fxy).cwiseAbs2().dot(w);
  v += (k1.fyx - k0.fyx).cwiseAbs2().dot(w);
  v += (k1.fyy - k0.fyy).cwiseAbs2().dot(w);
  return v;
}

double check_nonconvexity_estimate(const DeformationField& eta1, const DeformationField& eta0,
                                   const MaterialParams& mat, double c1) {
  RegularizerConfig no_reg;  // E.7 concerns the model energy itself
  const Field2 de = energy_gradient(eta1, mat, no_reg);
  const Field2 diff{eta1.positions().x - eta0.positions().x,
                    eta1.positions().y - eta0.positions().y};
  const double pairing = de.x.dot(diff.x) + de.y.dot(diff.y);
  const double e1 = eval_energy(eta1, mat, no_reg).total;
  const double e0 = eval_energy(eta0, mat, no_reg).total;
  return pairing - e1 + e0 + c1 * grad_l2_sq(eta1, eta0);
}

namespace {

// Stack per-component n x n blocks into a 2n x 2n matrix acting on [x;y].
SpMat block_diag2(const SpMat& m) {
  const int n = m.rows();
  std::vector<Triplet> trip;
  trip.reserve(2 * m.nonZeros());
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      trip.emplace_back(it.row(), it.col(), it.value());
      trip.emplace_back(n + it.row(), n + it.col(), it.value());
    }
  SpMat out(2 * n, 2 * n);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

}  // namespace

SpMat dissipation_form_matrix(const DeformationField& eta_anchor) {
  const SolidGrid& g = eta_anchor.grid();
  const DiffOps& d = eta_anchor.ops();
  const int n = g.node_count();
  const auto& kin = eta_anchor.kinematics();

  // Mandel rows of S(b): A maps [bx;by] to (S11, S22, sqrt2 S12) per node.
  auto diag = [](const Vec& v) { return v.asDiagonal(); };
  SpMat a(3 * n, 2 * n);
  {
    std::vector<Triplet> trip;
    auto add_block = [&](int row0, int col0, const SpMat& m) {
      for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it)
          trip.emplace_back(row0 + it.row(), col0 + it.col(), it.value());
    };
    SpMat s11_bx = 2.0 * diag(kin.fxx) * d.dx;
    SpMat s11_by = 2.0 * diag(kin.fyx) * d.dx;
    SpMat s22_bx = 2.0 * diag(kin.fxy) * d.dy;
    SpMat s22_by = 2.0 * diag(kin.fyy) * d.dy;
    SpMat s12_bx = kSqrt2 * (diag(kin.fxy) * d.dx + diag(kin.fxx) * d.dy);
    SpMat s12_by = kSqrt2 * (diag(kin.fyy) * d.dx + diag(kin.fyx) * d.dy);
    add_block(0, 0, s11_bx);
    add_block(0, n, s11_by);
    add_block(n, 0, s22_bx);
    add_block(n, n, s22_by);
    add_block(2 * n, 0, s12_bx);
    add_block(2 * n, n, s12_by);
    a.setFromTriplets(trip.begin(), trip.end());
  }
  Vec w3(3 * n);
  w3 << g.node_weight, g.node_weight, g.node_weight;
  SpMat m = (a.transpose() * SpMat(w3.asDiagonal()) * a).pruned();
  m.makeCompressed();
  return m;
}

SpMat highorder_form_matrix(const SolidGrid& g, const DiffOps& ops, int order) {
  const auto ho = ops.high_order(g, order);
  const int n = g.node_count();
  SpMat acc(n, n);
  for (size_t p = 0; p < ho.ops.size(); ++p) {
    SpMat term = ho.ops[p].transpose() * SpMat(g.node_weight.asDiagonal()) * ho.ops[p];
    acc = (acc + ho.multiplicity[p] * term).pruned();
  }
  return block_diag2(acc);
}

SpMat mass_form_matrix(const SolidGrid& g) {
  SpMat m(g.node_count(), g.node_count());
  m = SpMat(g.node_weight.asDiagonal());
  return block_diag2(m);
}

SpMat w12_form_matrix(const SolidGrid& g, const DiffOps& ops) {
  SpMat w = SpMat(g.node_weight.asDiagonal());
  SpMat m = w;
  m = (m + SpMat(ops.dx.transpose() * w * ops.dx)).pruned();
  m = (m + SpMat(ops.dy.transpose() * w * ops.dy)).pruned();
  return block_diag2(m);
}

}  // namespace varislip
