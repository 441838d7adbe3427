#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iqcmhe/iqc.hpp"
#include "iqcmhe/model.hpp"
#include "iqcmhe/sdp.hpp"

namespace iqcmhe::detect {

using numkit::Matrix;
using numkit::Vector;

struct ExtendedDims {
  int n = 0, n_w = 0, p = 0, q = 0, m = 0;
  int n_psi = 0, n_z = 0;
  int n_chi = 0;   // 2n + 2 n_psi
  int n_nu = 0;    // 2 n_w + 2p + n
  int n_zeta = 0;  // 2 n_w + m + n + 2 n_z
};

// One concrete parameter draw: every interval entry fixed, with independent
// draws for the two absolute auxiliary-output parameter copies.
struct EnvelopeSample {
  Matrix A, B_w, B_d, C, D_w, D_d, C_v, E_w;
  Matrix A_abs, B_w_abs, B_u, B_d_abs;
  Matrix C_v5, E_w5, C_v6, E_w6;
};

// Extended system matrices (script A, B, C, D) at one parameter point.
struct VertexSystem {
  Matrix A, B, C, D;
};

struct ExtendedVertexSystem {
  ExtendedDims dims;
  std::vector<VertexSystem> vertices;
  VertexSystem midpoint;
  int free_interval_count = 0;
};

/// Enumerates all corners of the joint parameter box (point intervals
/// collapsed) and assembles the extended system at each; throws
/// TooManyVertices beyond 20 free scalar intervals.
ExtendedVertexSystem assemble_extended_vertices(const model::LipschitzEnvelope& envelope,
                                                const iqc::FilterRealization& filter);

/// Assembles the extended system at one concrete parameter sample.
VertexSystem assemble_system(const EnvelopeSample& sample, const iqc::FilterRealization& filter);

EnvelopeSample envelope_midpoint(const model::LipschitzEnvelope& envelope, int p_eff);
EnvelopeSample envelope_random(const model::LipschitzEnvelope& envelope, int p_eff, Rng& rng);

struct DetectabilityCertificate {
  std::string scenario;
  double rho = 0.0;
  Matrix P, Q, Q0, R, R0, Mhat, P0;
  iqc::MultiplierInstance multiplier;
  double margin = 0.0;
  ExtendedDims dims;

  double rho2() const { return rho * rho; }
  bool nominal() const { return dims.p == 0; }
};

enum class VerifyStatus { Certified, Infeasible, SolverFailure, InteriorViolation };

struct VerifyOutcome {
  VerifyStatus status = VerifyStatus::SolverFailure;
  double margin = 0.0;
  std::optional<DetectabilityCertificate> certificate;
  double interior_max_eig = 0.0;
  std::string message;
};

struct VerifyOptions {
  double margin_accept = 1e-6;
  double scale_factor = 1e3;  // trace normalization bound = scale_factor * n_chi
  int interior_samples = 1000;
  double interior_tol = 1e-6;
  std::uint64_t seed = 1;
  std::string debug_dump;  // when set, the assembled problem is dumped here
  sdp::SolveOptions sdp;
};

/// Solves the robust-detectability feasibility problem over the envelope
/// vertices (margin maximized) and validates the result on random interior
/// parameter samples.
VerifyOutcome verify_detectability(const model::Scenario& scenario,
                                   const iqc::MultiplierTemplate& tpl, double rho,
                                   const VerifyOptions& opts = {});

/// Baseline certificate with the uncertainty channel removed (d = 0, empty
/// filter): the weights for the standard estimator.
VerifyOutcome verify_nominal(const model::Scenario& scenario, double rho,
                             const VerifyOptions& opts = {});

/// Dissipation-inequality value (left minus right side) for one transition of
/// the paired true/model systems.
double dissipation_value(const DetectabilityCertificate& cert, const Vector& chi,
                         const Vector& chi_next, const Vector& w, const Vector& w_tilde,
                         const Vector& xhat, const Vector& x_tilde, const Vector& y,
                         const Vector& y_tilde, const Vector& z, const Vector& z_tilde);

struct DissipationReport {
  double worst_violation = 0.0;
  long checks = 0;
};

/// Simulates pairs of (true uncertain, model) trajectories under common
/// control inputs and reports the worst violation of the dissipation
/// inequality.
DissipationReport validate_certificate(const DetectabilityCertificate& cert,
                                       const model::Scenario& scenario, int pairs,
                                       int length, std::uint64_t seed);

// Evaluates the verification LMI (negated: should be <= 0) at a sample.
Matrix evaluate_lmi(const DetectabilityCertificate& cert, const VertexSystem& sys);

nlohmann::json certificate_to_json(const DetectabilityCertificate& cert);
DetectabilityCertificate certificate_from_json(const nlohmann::json& j);
void save_certificate(const std::string& path, const DetectabilityCertificate& cert);
DetectabilityCertificate load_certificate(const std::string& path);
std::string certificate_hash(const DetectabilityCertificate& cert);

}  // namespace iqcmhe::detect
