#include "stpc/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace stpc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Ratio {
    std::int64_t num = 0;
    std::int64_t den = 0;
};

double mean_of_defined(const std::vector<Ratio>& ratios) {
    long double acc = 0.0L;
    std::size_t n = 0;
    for (const auto& r : ratios)
        if (r.den > 0) {
            acc += static_cast<long double>(r.num) / static_cast<long double>(r.den);
            ++n;
        }
    return n ? static_cast<double>(acc / static_cast<long double>(n)) : 0.0;
}

std::vector<double> to_values(const std::vector<Ratio>& ratios) {
    std::vector<double> out(ratios.size(), kNaN);
    for (std::size_t i = 0; i < ratios.size(); ++i)
        if (ratios[i].den > 0) out[i] = static_cast<double>(ratios[i].num) / static_cast<double>(ratios[i].den);
    return out;
}

void require_nonempty(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw std::invalid_argument("confusion matrix is empty");
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
    if (classes == 0) throw std::invalid_argument("confusion matrix needs at least one class");
}

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::vector<std::int64_t> counts)
    : classes_(classes), counts_(std::move(counts)) {
    if (counts_.size() != classes * classes) throw std::invalid_argument("confusion matrix counts must be C x C");
    for (auto c : counts_)
        if (c < 0) throw std::invalid_argument("confusion matrix counts must be nonnegative");
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

void ConfusionMatrix::accumulate(std::span<const int> truth, std::span<const int> pred, int ignore_label) {
    if (truth.size() != pred.size()) {
        throw std::invalid_argument("accumulate: " + std::to_string(truth.size()) + " truth labels vs " +
                                    std::to_string(pred.size()) + " predictions");
    }
    const auto in_range = [this](int v) { return v >= 0 && static_cast<std::size_t>(v) < classes_; };
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == ignore_label) continue;
        if (!in_range(truth[i]) || !in_range(pred[i])) {
            throw std::out_of_range("accumulate: label pair (" + std::to_string(truth[i]) + ", " +
                                    std::to_string(pred[i]) + ") outside [0, " + std::to_string(classes_) + ")");
        }
        ++counts_[static_cast<std::size_t>(truth[i]) * classes_ + static_cast<std::size_t>(pred[i])];
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw std::invalid_argument("merge: class counts differ");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

double overall_accuracy(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    std::int64_t diag = 0;
    for (std::size_t c = 0; c < cm.classes(); ++c) diag += cm.at(c, c);
    return static_cast<double>(diag) / static_cast<double>(cm.total());
}

namespace {

std::vector<Ratio> accuracy_ratios(const ConfusionMatrix& cm) {
    std::vector<Ratio> acc(cm.classes());
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        acc[c].num = cm.at(c, c);
        for (std::size_t p = 0; p < cm.classes(); ++p) acc[c].den += cm.at(c, p);
    }
    return acc;
}

std::vector<Ratio> iou_ratios(const ConfusionMatrix& cm) {
    std::vector<Ratio> iou(cm.classes());
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        std::int64_t row = 0, col = 0;
        for (std::size_t p = 0; p < cm.classes(); ++p) {
            row += cm.at(c, p);
            col += cm.at(p, c);
        }
        iou[c] = {cm.at(c, c), row + col - cm.at(c, c)};
    }
    return iou;
}

}  // namespace

std::vector<double> class_iou(const ConfusionMatrix& cm) { return to_values(iou_ratios(cm)); }

double mean_accuracy(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    return mean_of_defined(accuracy_ratios(cm));
}

double mean_iou(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    return mean_of_defined(iou_ratios(cm));
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    Metrics m;
    m.oa = overall_accuracy(cm);
    const auto acc = accuracy_ratios(cm);
    const auto iou = iou_ratios(cm);
    m.class_accuracy = to_values(acc);
    m.class_iou = to_values(iou);
    m.macc = mean_of_defined(acc);
    m.miou = mean_of_defined(iou);
    return m;
}

std::string metrics_key_values(const Metrics& m) {
    std::ostringstream os;
    os << "oa=" << fmt(m.oa) << " macc=" << fmt(m.macc) << " miou=" << fmt(m.miou);
    for (std::size_t c = 0; c < m.class_iou.size(); ++c) os << " iou_" << c << '=' << fmt(m.class_iou[c]);
    return os.str();
}

std::string metrics_csv_header(std::size_t classes) {
    std::string h = "oa,macc,miou";
    for (std::size_t c = 0; c < classes; ++c) h += ",iou_" + std::to_string(c);
    return h;
}

std::string metrics_csv_row(const Metrics& m) {
    std::string r = fmt(m.oa) + "," + fmt(m.macc) + "," + fmt(m.miou);
    for (double v : m.class_iou) r += "," + fmt(v);
    return r;
}

}  // namespace stpc
