#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dalign/gradcheck.hpp"

namespace dalign {

enum class LossTerm { CrossEntropy, DomainAlignment, Scbs, Adversarial, Diversity };

const char* to_string(LossTerm term);
inline constexpr LossTerm kAllLossTerms[] = {LossTerm::CrossEntropy, LossTerm::DomainAlignment,
                                             LossTerm::Scbs, LossTerm::Adversarial,
                                             LossTerm::Diversity};

// Builds a random small model and joint batch from `seed` (feature_dim <= 8,
// batch <= 16), evaluates `term` through the full model graph and checks every
// parameter gradient against central differences. Instances that land on a
// kink are redrawn from a derived seed.
GradCheckResult check_loss_gradient(LossTerm term, std::uint64_t seed, double step = 1e-6);

struct SelftestRow {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Gradient checks for every loss term plus closed-form oracles for the
// centroid tracker, schedules, AUC, optimizer and loss values.
std::vector<SelftestRow> run_selftest(std::size_t gradient_instances = 20);
std::string selftest_table(const std::vector<SelftestRow>& rows);

}  // namespace dalign
