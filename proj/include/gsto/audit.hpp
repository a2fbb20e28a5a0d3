#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gsto/config.hpp"

namespace gsto::cli {

struct AuditCheck {
  std::string name;
  double max_error = 0.0;
  double tol = 0.0;
  std::size_t checked = 0;
  std::size_t refined = 0;  // elements re-estimated with Ridders' method
  bool passed = true;
  std::string worst;  // location of the largest error
};

struct AuditReport {
  std::vector<AuditCheck> checks;
  double seconds = 0.0;

  bool passed() const;
  std::vector<std::string> failures() const;
  /// One line per check; timing excluded so reruns compare equal.
  std::string text() const;
};

/// Finite-difference audit of every primitive op, both gate forms and the
/// pyramid heads, in f64.
AuditReport per_op_audit(double eps, double tol, std::uint64_t seed);

/// Every parameter tensor of a miniature network against finite differences of
/// the full training loss (sampled elements per tensor, see gradcheck.samples).
AuditReport end_to_end_audit(const RunConfig& cfg);

/// Both audits, honoring gradcheck.fault; writes gradcheck.txt under cfg.out.
AuditReport run_gradcheck(RunConfig cfg, std::ostream& console);

}  // namespace gsto::cli
