// SPDX-License-Identifier: Apache-2.0

#include "oopk/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "oopk/tensor.hpp"

namespace oopk {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
}

void ConfusionMatrix::update(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size()) throw DimensionError("confusion update: size mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i], g = gt[i];
        if (p < 0 || p >= k_ || g < 0 || g >= k_)
            throw UsageError("confusion update: id out of range");
        counts_[static_cast<std::size_t>(g) * k_ + p] += 1;
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw DimensionError("confusion merge: class count mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::vector<double> ConfusionMatrix::per_class_iou() const {
    std::vector<double> iou(static_cast<std::size_t>(k_),
                            std::numeric_limits<double>::quiet_NaN());
    for (int c = 0; c < k_; ++c) {
        std::uint64_t tp = count(c, c), fp = 0, fn = 0;
        for (int o = 0; o < k_; ++o) {
            if (o == c) continue;
            fp += count(o, c);
            fn += count(c, o);
        }
        const std::uint64_t denom = tp + fp + fn;
        if (denom > 0) iou[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(denom);
    }
    return iou;
}

double ConfusionMatrix::miou() const {
    if (total() == 0) throw UsageError("miou: empty confusion matrix");
    double s = 0.0;
    int n = 0;
    for (double v : per_class_iou())
        if (!std::isnan(v)) {
            s += v;
            ++n;
        }
    return n ? s / n : 0.0;
}

double ConfusionMatrix::macc() const {
    if (total() == 0) throw UsageError("macc: empty confusion matrix");
    double s = 0.0;
    int n = 0;
    for (int c = 0; c < k_; ++c) {
        std::uint64_t gt_total = 0;
        for (int o = 0; o < k_; ++o) gt_total += count(c, o);
        if (gt_total == 0) continue;
        s += static_cast<double>(count(c, c)) / static_cast<double>(gt_total);
        ++n;
    }
    return n ? s / n : 0.0;
}

double RunReport::mean_miou() const {
    double s = 0.0;
    for (const auto& c : cells) s += c.cm.miou();
    return cells.empty() ? 0.0 : s / static_cast<double>(cells.size());
}

double RunReport::mean_macc() const {
    double s = 0.0;
    for (const auto& c : cells) s += c.cm.macc();
    return cells.empty() ? 0.0 : s / static_cast<double>(cells.size());
}

std::string csv_num(double v) {
    if (v == 0.0) v = 0.0;  // normalize -0
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    if (buf[0] == '-' && std::stod(buf) == 0.0) return buf + 1;  // "-0.0000" -> "0.0000"
    return buf;
}

std::string report_cells_csv(const RunReport& run) {
    std::ostringstream os;
    os << "round,domain,miou,macc\n";
    for (const auto& c : run.cells)
        os << c.round << "," << c.domain << "," << csv_num(100.0 * c.cm.miou()) << ","
           << csv_num(100.0 * c.cm.macc()) << "\n";
    return os.str();
}

std::string report_aggregate_csv(const RunReport& run, const RunReport* source_baseline) {
    std::ostringstream os;
    os << "metric,value\n";
    os << "mean_miou," << csv_num(100.0 * run.mean_miou()) << "\n";
    os << "mean_macc," << csv_num(100.0 * run.mean_macc()) << "\n";
    os << "samples," << run.samples_processed << "\n";
    if (source_baseline)
        os << "gain_over_source," << csv_num(100.0 * (run.mean_miou() - source_baseline->mean_miou()))
           << "\n";
    else
        os << "gain_over_source,unavailable (no source baseline)\n";
    return os.str();
}

std::string report_aggregate_csv(const RunReport& run, double baseline_mean_miou) {
    std::ostringstream os;
    os << "metric,value\n";
    os << "mean_miou," << csv_num(100.0 * run.mean_miou()) << "\n";
    os << "mean_macc," << csv_num(100.0 * run.mean_macc()) << "\n";
    os << "samples," << run.samples_processed << "\n";
    os << "gain_over_source," << csv_num(100.0 * (run.mean_miou() - baseline_mean_miou)) << "\n";
    return os.str();
}

}  // namespace oopk
