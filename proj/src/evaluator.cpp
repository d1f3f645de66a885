#include "lymphnet/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "lymphnet/errors.hpp"
#include "lymphnet/parallel.hpp"

namespace lymphnet {

const char* decided_by_name(DecidedBy d) {
    return d == DecidedBy::majority ? "majority" : "probability_fallback";
}

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : counts)
        for (auto c : row) n += c;
    return n;
}

std::size_t ConfusionMatrix::diagonal() const {
    std::size_t n = 0;
    for (int i = 0; i < kNumClasses; ++i) n += counts[i][i];
    return n;
}

double ConfusionMatrix::accuracy() const {
    const std::size_t n = total();
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(diagonal()) / static_cast<double>(n);
}

ImagePrediction predict_image(const Network<float>& net, const LabeledSample& sample) {
    ImagePrediction p;
    p.case_id = sample.case_id;
    p.set_index = sample.set_index;
    p.patch_index = sample.patch_index;
    p.observed_class = sample.record.label;
    const Tensor<float> probs = net.forward(normalize<float>(sample.record));
    if (probs.numel() != kNumClasses)
        throw ShapeError("predict_image: network emits " + std::to_string(probs.numel()) +
                         " classes, expected 4");
    for (int c = 0; c < kNumClasses; ++c) p.probabilities[c] = probs[c];
    p.predicted_class = 0;
    for (int c = 1; c < kNumClasses; ++c)
        if (p.probabilities[c] > p.probabilities[p.predicted_class]) p.predicted_class = c;
    return p;
}

SetPrediction vote_set(const std::vector<ImagePrediction>& predictions) {
    if (predictions.size() != kPatchesPerSet)
        throw std::invalid_argument("vote_set: expected 5 predictions, got " +
                                    std::to_string(predictions.size()));
    std::vector<const ImagePrediction*> ordered;
    for (const auto& p : predictions) ordered.push_back(&p);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        return a->patch_index < b->patch_index;
    });
    for (const auto* p : ordered) {
        if (p->case_id != ordered[0]->case_id || p->set_index != ordered[0]->set_index)
            throw std::invalid_argument("vote_set: predictions mix set identities");
        if (p->observed_class != ordered[0]->observed_class)
            throw std::invalid_argument("vote_set: predictions mix observed labels");
    }

    SetPrediction s;
    s.case_id = ordered[0]->case_id;
    s.set_index = ordered[0]->set_index;
    s.observed_class = ordered[0]->observed_class;

    int tally[kNumClasses] = {};
    for (int i = 0; i < kPatchesPerSet; ++i) {
        s.votes[i] = ordered[i]->predicted_class;
        ++tally[s.votes[i]];
    }
    for (int c = 0; c < kNumClasses; ++c) {
        if (tally[c] >= 3) {
            s.predicted_class = c;
            s.decided_by = DecidedBy::majority;
            return s;
        }
    }
    double sums[kNumClasses] = {};
    for (const auto* p : ordered)
        for (int c = 0; c < kNumClasses; ++c) sums[c] += p->probabilities[c];
    s.predicted_class = 0;
    for (int c = 1; c < kNumClasses; ++c)
        if (sums[c] > sums[s.predicted_class]) s.predicted_class = c;
    s.decided_by = DecidedBy::probability_fallback;
    return s;
}

ConfusionMatrix confusion(const std::vector<std::pair<int, int>>& pred_obs) {
    ConfusionMatrix m;
    for (const auto& [pred, obs] : pred_obs) {
        if (pred < 0 || pred >= kNumClasses || obs < 0 || obs >= kNumClasses)
            throw std::invalid_argument("confusion: class index out of range 0-3");
        ++m.counts[pred][obs];
    }
    return m;
}

EvaluationReport evaluate(const Network<float>& net, const std::vector<LabeledSample>& samples,
                          unsigned threads) {
    std::vector<const LabeledSample*> ordered;
    ordered.reserve(samples.size());
    for (const auto& s : samples) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        return std::tie(a->case_id, a->set_index, a->patch_index) <
               std::tie(b->case_id, b->set_index, b->patch_index);
    });

    // Whole 5-image sets only.
    std::map<std::pair<std::string, int>, int> group_sizes;
    for (const auto* s : ordered) ++group_sizes[{s->case_id, s->set_index}];
    for (const auto& [key, n] : group_sizes)
        if (n != kPatchesPerSet)
            throw std::invalid_argument("evaluate: set (" + key.first + ", " +
                                        std::to_string(key.second) + ") has " +
                                        std::to_string(n) + " images, expected 5");

    EvaluationReport report;
    report.images.resize(ordered.size());
    parallel_for(ordered.size(), threads,
                 [&](std::size_t i) { report.images[i] = predict_image(net, *ordered[i]); });

    std::vector<std::pair<int, int>> image_pairs, set_pairs;
    for (const auto& p : report.images)
        image_pairs.emplace_back(p.predicted_class, p.observed_class);

    for (std::size_t i = 0; i < report.images.size(); i += kPatchesPerSet) {
        std::vector<ImagePrediction> group(report.images.begin() + i,
                                           report.images.begin() + i + kPatchesPerSet);
        SetPrediction sp = vote_set(group);
        set_pairs.emplace_back(sp.predicted_class, sp.observed_class);
        report.sets.push_back(std::move(sp));
    }

    report.image_matrix = confusion(image_pairs);
    report.set_matrix = confusion(set_pairs);
    return report;
}

void write_confusion(const std::string& path, const ConfusionMatrix& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (int c = 0; c < kNumClasses; ++c) out << '\t' << class_name(c);
    out << '\n';
    for (int p = 0; p < kNumClasses; ++p) {
        out << class_name(p);
        for (int o = 0; o < kNumClasses; ++o) out << '\t' << m.counts[p][o];
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

void write_sets_detail(const std::string& path, const std::vector<SetPrediction>& sets) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "case_id\tset_index\tvotes\tdecided_by\tpredicted\tobserved\n";
    for (const auto& s : sets) {
        out << s.case_id << '\t' << s.set_index << '\t';
        for (int i = 0; i < kPatchesPerSet; ++i) out << (i ? "," : "") << s.votes[i];
        out << '\t' << decided_by_name(s.decided_by) << '\t' << s.predicted_class << '\t'
            << s.observed_class << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

void write_evaluation(const std::string& out_dir, const EvaluationReport& report) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());
    write_confusion((fs::path(out_dir) / "image_confusion.tsv").string(), report.image_matrix);
    write_confusion((fs::path(out_dir) / "set_confusion.tsv").string(), report.set_matrix);
    write_sets_detail((fs::path(out_dir) / "sets_detail.tsv").string(), report.sets);
}

}  // namespace lymphnet
