// Command-line surface for the patch-classification pipeline. All heavy
// lifting lives in the library; each subcommand wires files to library calls,
// prints a one-line summary, and drops its resolved configuration next to its
// outputs so a run can be reproduced exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "lymphnet/dataset.hpp"
#include "lymphnet/errors.hpp"
#include "lymphnet/evaluator.hpp"
#include "lymphnet/kernels.hpp"
#include "lymphnet/model.hpp"

namespace fs = std::filesystem;
using namespace lymphnet;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 42;
    unsigned threads = 1;
    std::string precision = "f32";
    std::string backend = "auto";
};

void write_resolved_config(const CLI::App& app, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << app.config_to_str(true, false);
    if (!out) throw IoError("write failed for '" + path + "'");
}

using RowKey = std::tuple<std::string, int, int>;

std::map<RowKey, Split> split_map(const std::vector<SplitRow>& rows, const std::string& path) {
    std::map<RowKey, Split> m;
    for (const auto& r : rows)
        if (!m.emplace(RowKey{r.case_id, r.set_index, r.patch_index}, r.split).second)
            throw ParseError("'" + path + "': duplicate split row for (" + r.case_id + ", " +
                             std::to_string(r.set_index) + ", " +
                             std::to_string(r.patch_index) + ")");
    return m;
}

// Joins manifest and split file, erroring on any row covered by one side only.
void partition_rows(const std::string& manifest_path, const std::string& split_path,
                    std::vector<ManifestRow>& train_rows, std::vector<ManifestRow>& val_rows,
                    std::vector<ManifestRow>& test_rows) {
    const auto rows = read_manifest(manifest_path);
    const auto srows = read_split(split_path);
    auto m = split_map(srows, split_path);
    for (const auto& r : rows) {
        const auto it = m.find(RowKey{r.case_id, r.set_index, r.patch_index});
        if (it == m.end())
            throw ParseError("split file does not cover (" + r.case_id + ", " +
                             std::to_string(r.set_index) + ", " + std::to_string(r.patch_index) +
                             ")");
        switch (it->second) {
            case Split::train: train_rows.push_back(r); break;
            case Split::val: val_rows.push_back(r); break;
            case Split::test: test_rows.push_back(r); break;
        }
    }
    if (m.size() != rows.size())
        throw ParseError("split file references rows absent from the manifest");
}

std::vector<PatchRecord> records_of(const std::string& manifest_path,
                                    const std::vector<ManifestRow>& rows) {
    std::vector<PatchRecord> out;
    for (auto& s : load_samples(manifest_path, rows)) out.push_back(std::move(s.record));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lymphoma patch-classification pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may appear after the subcommand name
    GlobalOpts g;
    app.add_option("--seed", g.seed, "global RNG seed")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads (never changes results)")
        ->capture_default_str();
    app.add_option("--precision", g.precision, "training scalar type")
        ->check(CLI::IsMember({"f32", "f64"}))
        ->capture_default_str();
    app.add_option("--backend", g.backend, "float kernel backend")
        ->check(CLI::IsMember({"auto", "scalar", "avx2"}))
        ->capture_default_str();
    app.set_config("--config", "", "read options from a key=value config file");

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    std::string synth_out;
    int synth_cases = 128;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--cases", synth_cases, "case count, divisible by 4")
        ->capture_default_str();

    auto* extract = app.add_subcommand("extract", "cut random patches from a PGM/PPM image");
    std::string ex_image, ex_out, ex_case;
    int ex_n = 0, ex_label = -1;
    double ex_threshold = 0;
    bool ex_reject = false;
    extract->add_option("--image", ex_image, "PGM/PPM input")->required();
    extract->add_option("--n", ex_n, "patches to extract")->required();
    extract->add_option("--label", ex_label, "class 0-3")->required();
    extract->add_option("--out", ex_out, "corpus directory")->required();
    extract->add_option("--case-id", ex_case, "case identifier (default: image stem)");
    auto* thr_opt = extract->add_option("--background-threshold", ex_threshold,
                                        "reject patches whose mean exceeds this");
    extract->add_flag("--reject-background", ex_reject,
                      "reject patches with mean intensity above 240");

    auto* split_cmd = app.add_subcommand("split", "assign corpus rows to train/val/test");
    std::string sp_manifest, sp_out;
    SplitCounts sp_counts;
    bool sp_case_disjoint = false;
    split_cmd->add_option("--manifest", sp_manifest, "manifest.tsv")->required();
    split_cmd->add_option("--out", sp_out, "split file to write")->required();
    split_cmd->add_option("--train", sp_counts.train, "training images")->capture_default_str();
    split_cmd->add_option("--val", sp_counts.val, "validation images")->capture_default_str();
    split_cmd->add_option("--test-sets", sp_counts.test_sets, "whole 5-patch sets for test")
        ->capture_default_str();
    split_cmd->add_flag("--case-disjoint", sp_case_disjoint,
                        "send whole cases to test (test-sets must divide by 16)");

    auto* train_cmd = app.add_subcommand("train", "train the network on a split corpus");
    std::string tr_manifest, tr_split, tr_out;
    TrainConfig tr_cfg;
    train_cmd->add_option("--manifest", tr_manifest, "manifest.tsv")->required();
    train_cmd->add_option("--split", tr_split, "split file")->required();
    train_cmd->add_option("--out", tr_out, "output directory (model.bin, history.tsv)")
        ->required();
    train_cmd->add_option("--lr", tr_cfg.learning_rate, "learning rate")->capture_default_str();
    train_cmd->add_option("--momentum", tr_cfg.momentum, "momentum")->capture_default_str();
    train_cmd->add_option("--batch-size", tr_cfg.batch_size, "minibatch size")
        ->capture_default_str();
    train_cmd->add_option("--epochs", tr_cfg.epochs, "epochs")->capture_default_str();
    train_cmd->add_option("--lr-decay", tr_cfg.lr_decay, "learning-rate multiplier")
        ->capture_default_str();
    train_cmd->add_option("--lr-decay-every", tr_cfg.lr_decay_every,
                          "epochs between decays (0 = never)")
        ->capture_default_str();

    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    double gc_eps = 1e-5, gc_tol = 1e-6;
    std::string gc_out;
    gradcheck_cmd->add_option("--epsilon", gc_eps, "central-difference step")
        ->capture_default_str();
    gradcheck_cmd->add_option("--tolerance", gc_tol, "max relative error to pass")
        ->capture_default_str();
    gradcheck_cmd->add_option("--out", gc_out, "report file (optional)");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on the test split");
    std::string ev_manifest, ev_split, ev_model, ev_out;
    eval_cmd->add_option("--manifest", ev_manifest, "manifest.tsv")->required();
    eval_cmd->add_option("--split", ev_split, "split file")->required();
    eval_cmd->add_option("--model", ev_model, "model file")->required();
    eval_cmd->add_option("--out", ev_out, "report directory")->required();

    auto* predict_cmd = app.add_subcommand("predict", "classify one patch record");
    std::string pr_model, pr_record, pr_out;
    predict_cmd->add_option("--model", pr_model, "model file")->required();
    predict_cmd->add_option("--record", pr_record, "patch record file")->required();
    predict_cmd->add_option("--out", pr_out, "also write the prediction line here");

    CLI11_PARSE(app, argc, argv);

    try {
        kernels::set_backend(g.backend);

        if (synth->parsed()) {
            const auto rows = write_synth_corpus(synth_out, synth_cases, g.seed);
            write_resolved_config(app, (fs::path(synth_out) / "synth.config").string());
            std::printf("synth: wrote %zu records for %d cases to %s\n", rows.size(),
                        synth_cases, synth_out.c_str());
        } else if (extract->parsed()) {
            if (ex_label < 0 || ex_label >= kNumClasses)
                throw std::invalid_argument("extract: label " + std::to_string(ex_label) +
                                            " out of range 0-3");
            if (ex_n < 1) throw std::invalid_argument("extract: --n must be >= 1");
            std::optional<double> threshold;
            if (*thr_opt) threshold = ex_threshold;
            else if (ex_reject) threshold = 240.0;

            const GrayImage img = read_netpbm_file(ex_image);
            auto patches = extract_patches(img, static_cast<std::size_t>(ex_n), g.seed, threshold);
            for (auto& p : patches) p.label = static_cast<std::uint8_t>(ex_label);

            const std::string case_id = ex_case.empty() ? fs::path(ex_image).stem().string()
                                                        : ex_case;
            const fs::path manifest_path = fs::path(ex_out) / "manifest.tsv";
            std::vector<ManifestRow> rows;
            if (fs::exists(manifest_path)) rows = read_manifest(manifest_path.string());
            int existing = 0;
            for (const auto& r : rows) existing += r.case_id == case_id;
            if (existing + ex_n > kSetsPerCase * kPatchesPerSet)
                throw std::invalid_argument("extract: case " + case_id +
                                            " cannot hold more than 20 patches");
            std::error_code ec;
            fs::create_directories(fs::path(ex_out) / "records", ec);
            if (ec) throw IoError("cannot create '" + ex_out + "/records': " + ec.message());
            for (int k = 0; k < ex_n; ++k) {
                const int slot = existing + k;
                ManifestRow row;
                row.case_id = case_id;
                row.set_index = slot / kPatchesPerSet;
                row.patch_index = slot % kPatchesPerSet;
                row.label = ex_label;
                row.path = "records/" + case_id + "_s" + std::to_string(row.set_index) + "_p" +
                           std::to_string(row.patch_index) + ".txt";
                write_record_file((fs::path(ex_out) / row.path).string(), patches[k]);
                rows.push_back(std::move(row));
            }
            write_manifest(manifest_path.string(), rows);
            write_resolved_config(app, (fs::path(ex_out) / "extract.config").string());
            std::printf("extract: wrote %d records for case %s to %s\n", ex_n, case_id.c_str(),
                        ex_out.c_str());
        } else if (split_cmd->parsed()) {
            const auto rows = read_manifest(sp_manifest);
            const auto assigned = build_split(rows, sp_counts, g.seed, sp_case_disjoint);
            write_split(sp_out, assigned);
            write_resolved_config(app, sp_out + ".config");
            std::size_t n_test = 0;
            for (const auto& r : assigned) n_test += r.split == Split::test;
            std::printf("split: train=%zu val=%zu test=%zu (%zu sets) -> %s\n", sp_counts.train,
                        sp_counts.val, n_test, n_test / kPatchesPerSet, sp_out.c_str());
        } else if (train_cmd->parsed()) {
            std::vector<ManifestRow> train_rows, val_rows, test_rows;
            partition_rows(tr_manifest, tr_split, train_rows, val_rows, test_rows);
            const auto train_recs = records_of(tr_manifest, train_rows);
            const auto val_recs = records_of(tr_manifest, val_rows);
            tr_cfg.seed = g.seed;
            tr_cfg.threads = g.threads;

            std::error_code ec;
            fs::create_directories(tr_out, ec);
            if (ec) throw IoError("cannot create '" + tr_out + "': " + ec.message());
            const std::string model_path = (fs::path(tr_out) / "model.bin").string();
            const ArchitectureSpec arch = default_arch();

            double best_val = 0;
            std::size_t n_epochs = 0;
            if (g.precision == "f64") {
                const auto result = train<double>(arch, tr_cfg, train_recs, val_recs);
                save_model_file(model_path, result.params, arch);
                write_history((fs::path(tr_out) / "history.tsv").string(), result.history);
                for (const auto& e : result.history.epochs)
                    best_val = std::max(best_val, e.val_accuracy);
                n_epochs = result.history.epochs.size();
            } else {
                const auto result = train<float>(arch, tr_cfg, train_recs, val_recs);
                save_model_file(model_path, result.params, arch);
                write_history((fs::path(tr_out) / "history.tsv").string(), result.history);
                for (const auto& e : result.history.epochs)
                    best_val = std::max(best_val, e.val_accuracy);
                n_epochs = result.history.epochs.size();
            }
            write_resolved_config(app, (fs::path(tr_out) / "train.config").string());
            std::printf("train: %zu epochs, best val_acc=%.6f -> %s\n", n_epochs, best_val,
                        model_path.c_str());
        } else if (gradcheck_cmd->parsed()) {
            const GradCheckReport report = grad_check(toy_arch(), g.seed, gc_eps, gc_tol);
            if (!gc_out.empty()) {
                std::ofstream out(gc_out);
                if (!out) throw IoError("cannot open '" + gc_out + "' for writing");
                char line[160];
                for (const auto& b : report.blocks) {
                    std::snprintf(line, sizeof line,
                                  "%s\tmax_rel_err=%.3e\tworst_index=%zu\tanalytic=%.9e\t"
                                  "numeric=%.9e\n",
                                  b.name.c_str(), b.max_rel_err, b.worst_index, b.analytic,
                                  b.numeric);
                    out << line;
                }
                std::snprintf(line, sizeof line, "max_rel_err=%.3e\ttolerance=%.3e\t%s\n",
                              report.max_rel_err, report.tolerance,
                              report.pass ? "PASS" : "FAIL");
                out << line;
                write_resolved_config(app, gc_out + ".config");
            }
            std::printf("gradcheck: max_rel_err=%.3e %s\n", report.max_rel_err,
                        report.pass ? "PASS" : "FAIL");
            if (!report.pass) {
                for (const auto& b : report.blocks)
                    if (b.max_rel_err >= report.tolerance)
                        std::fprintf(stderr,
                                     "  %s: rel_err=%.3e at index %zu (analytic %.9e, "
                                     "numeric %.9e)\n",
                                     b.name.c_str(), b.max_rel_err, b.worst_index, b.analytic,
                                     b.numeric);
                return 1;
            }
        } else if (eval_cmd->parsed()) {
            std::vector<ManifestRow> train_rows, val_rows, test_rows;
            partition_rows(ev_manifest, ev_split, train_rows, val_rows, test_rows);
            const LoadedModel m = load_model_file(ev_model);
            const Network<float> net(m.spec, m.params);
            const auto samples = load_samples(ev_manifest, test_rows);
            const EvaluationReport report = evaluate(net, samples, g.threads);
            write_evaluation(ev_out, report);
            write_resolved_config(app, (fs::path(ev_out) / "eval.config").string());
            std::printf("image_acc=%.6f set_acc=%.6f\n", report.image_matrix.accuracy(),
                        report.set_matrix.accuracy());
        } else if (predict_cmd->parsed()) {
            const LoadedModel m = load_model_file(pr_model);
            const Network<float> net(m.spec, m.params);
            LabeledSample s;
            s.case_id = fs::path(pr_record).stem().string();
            s.record = read_record_file(pr_record);
            const ImagePrediction p = predict_image(net, s);
            char line[256];
            std::snprintf(line, sizeof line,
                          "predicted_class=%d predicted_name=%s probabilities=%.6f,%.6f,%.6f,"
                          "%.6f\n",
                          p.predicted_class, class_name(p.predicted_class), p.probabilities[0],
                          p.probabilities[1], p.probabilities[2], p.probabilities[3]);
            if (!pr_out.empty()) {
                std::ofstream out(pr_out);
                if (!out) throw IoError("cannot open '" + pr_out + "' for writing");
                out << line;
                write_resolved_config(app, pr_out + ".config");
            }
            std::fputs(line, stdout);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
