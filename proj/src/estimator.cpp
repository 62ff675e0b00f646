#include "sppiv/estimator.hpp"

#include <Eigen/Eigenvalues>
#include <chrono>

#include "sppiv/error.hpp"
#include "sppiv/linalg.hpp"

namespace sppiv {

namespace {

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void check_dims(const KalmanState& s, const LinearRom& rom) {
  require(s.z_hat.size() == rom.rank() && s.P.rows() == rom.rank() && rom.Q.size() == rom.rank(),
          ErrorCode::DimensionMismatch, "state and model dimensions disagree");
}

/// Factorises ws.S in place, adding a 1e-10 trace/m ridge when it is not
/// numerically positive definite.
void factor_innovation(KalmanWorkspace& ws) {
  ws.llt.compute(ws.S);
  bool ok = ws.llt.info() == Eigen::Success;
  if (ok) {
    const auto d = ws.llt.matrixLLT().diagonal();
    ok = d.minCoeff() > 1e-7 * d.maxCoeff();
  }
  if (!ok) {
    const double ridge = 1e-10 * ws.S.trace() / static_cast<double>(ws.S.rows());
    ws.S.diagonal().array() += ridge > 0.0 ? ridge : 1e-300;
    ws.llt.compute(ws.S);
    ++ws.regularized;
  }
}

/// P <- (P + P^T) / 2 without a temporary.
void symmetrize(Eigen::MatrixXd& P) {
  const Eigen::Index r = P.rows();
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = j + 1; i < r; ++i) {
      const double m = 0.5 * (P(i, j) + P(j, i));
      P(i, j) = m;
      P(j, i) = m;
    }
  }
}

}  // namespace

KalmanState kf_init(int r) {
  require(r >= 1, ErrorCode::InvalidArgument, "state dimension must be >= 1");
  return KalmanState{Eigen::VectorXd::Zero(r), Eigen::MatrixXd::Identity(r, r), 0};
}

KalmanWorkspace::KalmanWorkspace(int r, int m)
    : FP(r, r), CP(m, r), S(m, m), Kt(m, r), innov(m), tmp(r), llt(m) {}

void kf_predict_into(KalmanState& s, const LinearRom& rom, KalmanWorkspace& ws) {
  if (!s.z_hat.allFinite()) fail(ErrorCode::NonFinite, "non-finite Kalman state");
  ws.tmp.noalias() = rom.F * s.z_hat;
  s.z_hat = ws.tmp;
  ws.FP.noalias() = rom.F * s.P;
  s.P.noalias() = ws.FP * rom.F.transpose();
  s.P.diagonal() += rom.Q;
}

void kf_update_into(KalmanState& s, const LinearRom& rom, const Eigen::MatrixXd& C,
                    const Eigen::Ref<const Eigen::VectorXd>& y, KalmanWorkspace& ws) {
  require(y.size() == C.rows() && rom.R.size() == C.rows(), ErrorCode::DimensionMismatch,
          "observation length does not match C rows / R");
  ws.CP.noalias() = C * s.P;
  ws.S.noalias() = ws.CP * C.transpose();
  ws.S.diagonal() += rom.R;
  factor_innovation(ws);

  // Kt = S^-1 C P  (= K^T since P and S are symmetric)
  ws.Kt = ws.CP;
  ws.llt.solveInPlace(ws.Kt);

  ws.innov = y;
  ws.innov.noalias() -= C * s.z_hat;
  s.z_hat.noalias() += ws.Kt.transpose() * ws.innov;
  s.P.noalias() -= ws.Kt.transpose() * ws.CP;

  symmetrize(s.P);
  ++s.step_count;
}

KalmanState kf_predict(KalmanState s, const LinearRom& rom) {
  check_dims(s, rom);
  KalmanWorkspace ws(rom.rank(), 0);
  kf_predict_into(s, rom, ws);
  return s;
}

KalmanState kf_update(KalmanState s, const LinearRom& rom, const Eigen::MatrixXd& C,
                      const Eigen::Ref<const Eigen::VectorXd>& y) {
  check_dims(s, rom);
  require(C.cols() == rom.rank(), ErrorCode::DimensionMismatch, "C column count != r");
  KalmanWorkspace ws(rom.rank(), static_cast<int>(C.rows()));
  kf_update_into(s, rom, C, y, ws);
  return s;
}

Eigen::VectorXd pinv_estimate(const Eigen::MatrixXd& C, const Eigen::Ref<const Eigen::VectorXd>& y) {
  require(y.size() == C.rows(), ErrorCode::DimensionMismatch, "observation length does not match C rows");
  return pseudo_inverse(C) * y;
}

KalmanFilter::KalmanFilter(LinearRom rom, Eigen::MatrixXd C, Form form)
    : rom_(std::move(rom)),
      C_(std::move(C)),
      state_(kf_init(rom_.rank())),
      ws_(rom_.rank(), static_cast<int>(C_.rows())),
      gain_(rom_.rank(), C_.rows()) {
  require(C_.cols() == rom_.rank() && C_.rows() == rom_.R.size() && rom_.Q.size() == rom_.rank(),
          ErrorCode::DimensionMismatch, "model, noise and observation matrix dimensions disagree");
  const int r = rom_.rank();
  low_rank_ = form == Form::Auto && C_.rows() > r && rom_.R.size() > 0 && rom_.R.minCoeff() > 0.0 &&
              rom_.R.allFinite();
  if (low_rank_) {
    H_ = C_.transpose() * rom_.R.cwiseInverse().asDiagonal();
    G_ = H_ * C_;
    A_.resize(r, r);
    lu_ = Eigen::PartialPivLU<Eigen::MatrixXd>(r);
    hz_.resize(r);
  }
}

void KalmanFilter::update_low_rank(const Eigen::Ref<const Eigen::VectorXd>& y) {
  require(y.size() == C_.rows(), ErrorCode::DimensionMismatch, "observation length does not match C rows");
  KalmanState& s = state_;
  // P+ = (I + P G)^-1 P
  A_.noalias() = s.P * G_;
  A_.diagonal().array() += 1.0;
  lu_.compute(A_);
  ws_.FP = lu_.solve(s.P);
  s.P = ws_.FP;

  // z += P+ C^T R^-1 (y - C z)
  ws_.innov = y;
  ws_.innov.noalias() -= C_ * s.z_hat;
  hz_.noalias() = H_ * ws_.innov;
  s.z_hat.noalias() += s.P * hz_;

  symmetrize(s.P);
  ++s.step_count;
}

void KalmanFilter::reset() {
  state_.z_hat.setZero();
  state_.P.setIdentity();
  state_.step_count = 0;
}

void KalmanFilter::predict() {
  if (steady_) {
    if (!state_.z_hat.allFinite()) fail(ErrorCode::NonFinite, "non-finite Kalman state");
    ws_.tmp.noalias() = rom_.F * state_.z_hat;
    state_.z_hat = ws_.tmp;
    return;
  }
  kf_predict_into(state_, rom_, ws_);
}

void KalmanFilter::update(const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (steady_) {
    require(y.size() == C_.rows(), ErrorCode::DimensionMismatch, "observation length does not match C rows");
    ws_.innov = y;
    ws_.innov.noalias() -= C_ * state_.z_hat;
    state_.z_hat.noalias() += gain_ * ws_.innov;
    ++state_.step_count;
    return;
  }
  if (low_rank_) {
    update_low_rank(y);
    return;
  }
  kf_update_into(state_, rom_, C_, y, ws_);
}

const Eigen::VectorXd& KalmanFilter::step(const Eigen::Ref<const Eigen::VectorXd>& y) {
  const auto t0 = now_ns();
  predict();
  update(y);
  last_step_ns_ = now_ns() - t0;
  return state_.z_hat;
}

int KalmanFilter::freeze_gain(double tol, int max_iter) {
  KalmanState s = kf_init(rom_.rank());
  KalmanWorkspace ws(rom_.rank(), static_cast<int>(C_.rows()));
  Eigen::MatrixXd prev = s.P;
  int it = 0;
  for (; it < max_iter; ++it) {
    kf_predict_into(s, rom_, ws);
    kf_update_into(s, rom_, C_, Eigen::VectorXd::Zero(C_.rows()), ws);
    const double scale = std::max(1.0, s.P.cwiseAbs().maxCoeff());
    if ((s.P - prev).cwiseAbs().maxCoeff() < tol * scale) break;
    prev = s.P;
  }
  // Gain of the converged recursion: K = P_pred C^T S^-1, with the last
  // workspace holding Kt = S^-1 C P_pred.
  gain_ = ws.Kt.transpose();
  steady_ = true;
  return it + 1;
}

PinvEstimator::PinvEstimator(const Eigen::MatrixXd& C) : pinv_(pseudo_inverse(C)), z_(C.cols()) {}

const Eigen::VectorXd& PinvEstimator::estimate(const Eigen::Ref<const Eigen::VectorXd>& y) {
  const auto t0 = now_ns();
  require(y.size() == pinv_.cols(), ErrorCode::DimensionMismatch, "observation length does not match C rows");
  z_.noalias() = pinv_ * y;
  last_step_ns_ = now_ns() - t0;
  return z_;
}

bool covariance_ok(const Eigen::MatrixXd& P, double sym_tol, double psd_tol) {
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > sym_tol) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -psd_tol * std::max(P.trace(), 0.0);
}

}  // namespace sppiv
