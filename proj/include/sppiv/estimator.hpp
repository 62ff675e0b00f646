#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>
#include <cstdint>

#include "sppiv/rom.hpp"

namespace sppiv {

struct KalmanState {
  Eigen::VectorXd z_hat;
  Eigen::MatrixXd P;
  std::int64_t step_count = 0;
};

/// Zero estimate, identity covariance.
KalmanState kf_init(int r);

/// Scratch storage for one filter, sized once for (r, 2p).
struct KalmanWorkspace {
  KalmanWorkspace(int r, int m);

  Eigen::MatrixXd FP;     // r x r
  Eigen::MatrixXd CP;     // m x r
  Eigen::MatrixXd S;      // m x m innovation covariance
  Eigen::MatrixXd Kt;     // m x r, transposed gain
  Eigen::VectorXd innov;  // m
  Eigen::VectorXd tmp;    // r
  Eigen::LLT<Eigen::MatrixXd> llt;
  std::int64_t regularized = 0;  // updates that needed the ridge fallback
};

// In-place primitives shared by the free functions and KalmanFilter.
void kf_predict_into(KalmanState& s, const LinearRom& rom, KalmanWorkspace& ws);
void kf_update_into(KalmanState& s, const LinearRom& rom, const Eigen::MatrixXd& C,
                    const Eigen::Ref<const Eigen::VectorXd>& y, KalmanWorkspace& ws);

/// z <- F z, P <- F P F^T + Q.
KalmanState kf_predict(KalmanState s, const LinearRom& rom);
/// K = P C^T (C P C^T + R)^-1, z <- z + K (y - C z), P <- P - K C P,
/// followed by P <- (P + P^T) / 2.
KalmanState kf_update(KalmanState s, const LinearRom& rom, const Eigen::MatrixXd& C,
                      const Eigen::Ref<const Eigen::VectorXd>& y);

/// Least-squares / minimum-norm snapshot estimate z = C^+ y.
Eigen::VectorXd pinv_estimate(const Eigen::MatrixXd& C, const Eigen::Ref<const Eigen::VectorXd>& y);

/// Streaming Kalman filter over a fixed model and sensor set.
///
/// After construction `step` performs no heap allocation. `freeze_gain`
/// switches to the precomputed steady-state gain.
///
/// With more observations than modes (2p > r) and R > 0 the update uses the
/// equivalent low-rank form P+ = (I + P G)^-1 P, K = P+ C^T R^-1 with
/// G = C^T R^-1 C precomputed, so a step costs O(r^3 + p r) instead of a
/// 2p x 2p factorisation. `Form::Direct` forces the innovation solve.
class KalmanFilter {
 public:
  enum class Form { Auto, Direct };

  KalmanFilter(LinearRom rom, Eigen::MatrixXd C, Form form = Form::Auto);

  void reset();
  void predict();
  void update(const Eigen::Ref<const Eigen::VectorXd>& y);
  /// predict + update; returns the filtered estimate.
  const Eigen::VectorXd& step(const Eigen::Ref<const Eigen::VectorXd>& y);

  /// Iterates the covariance recursion from P = I until ||dP||_max < tol
  /// (relative) and fixes the gain. Returns the iteration count used.
  int freeze_gain(double tol = 1e-12, int max_iter = 100000);
  bool steady() const { return steady_; }
  const Eigen::MatrixXd& steady_gain() const { return gain_; }

  const KalmanState& state() const { return state_; }
  const LinearRom& rom() const { return rom_; }
  const Eigen::MatrixXd& C() const { return C_; }
  std::int64_t last_step_ns() const { return last_step_ns_; }
  std::int64_t regularized_updates() const { return ws_.regularized; }
  bool low_rank_update() const { return low_rank_; }

 private:
  void update_low_rank(const Eigen::Ref<const Eigen::VectorXd>& y);

  LinearRom rom_;
  Eigen::MatrixXd C_;
  KalmanState state_;
  KalmanWorkspace ws_;
  bool low_rank_ = false;
  Eigen::MatrixXd G_;  // r x r, C^T R^-1 C
  Eigen::MatrixXd H_;  // r x m, C^T R^-1
  Eigen::MatrixXd A_;  // r x r scratch
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  Eigen::VectorXd hz_;  // r
  bool steady_ = false;
  Eigen::MatrixXd gain_;  // r x m
  std::int64_t last_step_ns_ = 0;
};

/// Snapshot estimator with C^+ precomputed.
class PinvEstimator {
 public:
  explicit PinvEstimator(const Eigen::MatrixXd& C);
  const Eigen::VectorXd& estimate(const Eigen::Ref<const Eigen::VectorXd>& y);
  std::int64_t last_step_ns() const { return last_step_ns_; }

 private:
  Eigen::MatrixXd pinv_;
  Eigen::VectorXd z_;
  std::int64_t last_step_ns_ = 0;
};

/// True when P is symmetric within `sym_tol` and its smallest eigenvalue is
/// at least -psd_tol * trace(P).
bool covariance_ok(const Eigen::MatrixXd& P, double sym_tol = 1e-10, double psd_tol = 1e-10);

}  // namespace sppiv
