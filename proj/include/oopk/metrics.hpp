// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace oopk {

// K x K pixel tally; rows = ground truth, cols = prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes = 0)
        : k_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

    int num_classes() const { return k_; }
    std::uint64_t count(int gt, int pred) const {
        return counts_[static_cast<std::size_t>(gt) * k_ + pred];
    }
    std::uint64_t total() const;

    // pred/gt are flat id maps of equal length with ids in [0,K).
    void update(const std::vector<int>& pred, const std::vector<int>& gt);
    void merge(const ConfusionMatrix& other);

    // IoU_c = TP/(TP+FP+FN); classes absent from both gt and pred are
    // excluded from the mean. mAcc averages TP/GT over gt-present classes.
    double miou() const;
    double macc() const;
    std::vector<double> per_class_iou() const;  // NaN for absent classes

private:
    int k_;
    std::vector<std::uint64_t> counts_;
};

struct RunCell {
    int round = 0;
    std::string domain;
    ConfusionMatrix cm;
};

struct RunReport {
    std::vector<RunCell> cells;  // stream order
    long samples_processed = 0;

    double mean_miou() const;
    double mean_macc() const;
};

// Per-cell rows (`round,domain,miou,macc`) followed by an aggregate table
// (`metric,value` with mean_miou, mean_macc, and gain_over_source when a
// baseline is supplied). Values printed as percent with fixed precision so
// reruns are byte-identical.
std::string report_cells_csv(const RunReport& run);
std::string report_aggregate_csv(const RunReport& run, const RunReport* source_baseline);
// Same table with a precomputed baseline mean mIoU (as a fraction).
std::string report_aggregate_csv(const RunReport& run, double baseline_mean_miou);

// Fixed-format float used by every CSV writer.
std::string csv_num(double v);

}  // namespace oopk
