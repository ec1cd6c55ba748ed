#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stpc {

// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes);
    ConfusionMatrix(std::size_t classes, std::vector<std::int64_t> counts);

    std::size_t classes() const noexcept { return classes_; }
    std::int64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
    std::int64_t total() const;

    // Points whose truth equals ignore_label are skipped. Other labels must lie in
    // [0, classes); violations throw std::out_of_range.
    void accumulate(std::span<const int> truth, std::span<const int> pred, int ignore_label = -1);
    void merge(const ConfusionMatrix& other);

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t classes_;
    std::vector<std::int64_t> counts_;
};

struct Metrics {
    double oa = 0.0;
    double macc = 0.0;
    double miou = 0.0;
    std::vector<double> class_accuracy;  // NaN for classes absent from truth
    std::vector<double> class_iou;       // NaN for classes with an empty union
};

// Throws std::invalid_argument for an empty matrix. Classes with an empty
// denominator are excluded from mAcc / mIoU.
double overall_accuracy(const ConfusionMatrix& cm);
double mean_accuracy(const ConfusionMatrix& cm);
double mean_iou(const ConfusionMatrix& cm);
std::vector<double> class_iou(const ConfusionMatrix& cm);
Metrics compute_metrics(const ConfusionMatrix& cm);

// "oa=... macc=... miou=... iou_0=..." on one line.
std::string metrics_key_values(const Metrics& m);
std::string metrics_csv_header(std::size_t classes);
std::string metrics_csv_row(const Metrics& m);

}  // namespace stpc
