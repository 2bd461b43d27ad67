#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "clincon/data_model.hpp"
#include "clincon/metrics.hpp"
#include "clincon/pipeline.hpp"

namespace clincon {

/// Scores a classifier on labeled test samples. Single-biomarker models
/// report that biomarker; multi-label models report all five, their
/// averages and the multi-label AUROC.
MetricReport evaluate_classifier(const ClassifierState& model, const Dataset& test, std::uint64_t seed = 0,
                                 std::string description = {});

/// Headline AUROC of a report: multi-label AUROC when present, otherwise the
/// single biomarker's AUROC.
double headline_auroc(const MetricReport& report);

struct AccessRow {
  double fraction = 0;
  std::uint64_t seed = 0;
  std::size_t n_labeled = 0;
  double auroc = 0;

  bool operator==(const AccessRow&) const = default;
};

/// Linear probes on a frozen encoder trained with growing fractions of the
/// labeled pool. Rows are ordered by fraction, then seed.
std::vector<AccessRow> run_access_sweep(std::shared_ptr<const EncoderState> enc, const Dataset& labeled,
                                        const Dataset& test, const Target& target, std::span<const double> fractions,
                                        std::span<const std::uint64_t> seeds, const HyperParams& hp);

/// CSV with header fraction,seed,n_labeled,auroc.
void write_access_csv(std::span<const AccessRow> rows, const std::filesystem::path& path);

}  // namespace clincon
