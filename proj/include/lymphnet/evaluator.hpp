#ifndef LYMPHNET_EVALUATOR_HPP
#define LYMPHNET_EVALUATOR_HPP

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "lymphnet/dataset.hpp"
#include "lymphnet/model.hpp"

namespace lymphnet {

struct ImagePrediction {
    std::string case_id;
    int set_index = 0;
    int patch_index = 0;
    std::array<double, kNumClasses> probabilities{};
    int predicted_class = 0;  // argmax, ties toward the lowest index
    int observed_class = 0;
};

enum class DecidedBy { majority, probability_fallback };
const char* decided_by_name(DecidedBy d);

struct SetPrediction {
    std::string case_id;
    int set_index = 0;
    std::array<int, kPatchesPerSet> votes{};  // per-image classes, patch order
    int predicted_class = 0;
    DecidedBy decided_by = DecidedBy::majority;
    int observed_class = 0;
};

// counts[predicted][observed], mirroring the report tables' orientation.
struct ConfusionMatrix {
    std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

    std::size_t total() const;
    std::size_t diagonal() const;
    bool empty() const { return total() == 0; }
    double accuracy() const;  // NaN with empty() set when there are no samples
};

ImagePrediction predict_image(const Network<float>& net, const LabeledSample& sample);

// Majority wins as soon as some class has >= 3 of the 5 votes; otherwise the
// class with the largest summed probability wins (ties toward the lowest
// index) and the prediction is flagged probability_fallback.
SetPrediction vote_set(const std::vector<ImagePrediction>& predictions);

ConfusionMatrix confusion(const std::vector<std::pair<int, int>>& pred_obs);

struct EvaluationReport {
    ConfusionMatrix image_matrix;
    ConfusionMatrix set_matrix;
    std::vector<ImagePrediction> images;  // sorted by (case_id, set, patch)
    std::vector<SetPrediction> sets;      // sorted by (case_id, set)
};

// Predictions may run on several threads; results are merged in sorted
// identity order, so the report does not depend on the thread count.
// Rejects inputs containing partial 5-image sets.
EvaluationReport evaluate(const Network<float>& net, const std::vector<LabeledSample>& samples,
                          unsigned threads = 1);

void write_confusion(const std::string& path, const ConfusionMatrix& m);
void write_sets_detail(const std::string& path, const std::vector<SetPrediction>& sets);

// image_confusion.tsv, set_confusion.tsv, sets_detail.tsv under out_dir.
void write_evaluation(const std::string& out_dir, const EvaluationReport& report);

}  // namespace lymphnet

#endif
