#ifndef LYMPHNET_DATASET_HPP
#define LYMPHNET_DATASET_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lymphnet/tensor.hpp"

namespace lymphnet {

inline constexpr std::size_t kPatchSide = 40;
inline constexpr std::size_t kPatchPixels = kPatchSide * kPatchSide;
inline constexpr int kNumClasses = 4;
inline constexpr int kSetsPerCase = 4;
inline constexpr int kPatchesPerSet = 5;

// 0 benign, 1 DLBCL, 2 BL, 3 SLL.
const char* class_name(int label);

// One labeled 40x40 patch; the unit the network consumes.
struct PatchRecord {
    std::uint8_t label = 0;
    std::array<std::uint8_t, kPatchPixels> pixels{};

    bool operator==(const PatchRecord&) const = default;
};

// Text form: exactly 1601 comma-separated decimal integers and a newline,
// label first. Parse errors name the offending entry index.
std::size_t write_record(const PatchRecord& r, std::ostream& out);
PatchRecord parse_record_line(const std::string& line);
void write_record_file(const std::string& path, const PatchRecord& r);
PatchRecord read_record_file(const std::string& path);

// One corpus row; path is stored relative to the manifest file's directory.
struct ManifestRow {
    std::string path;
    std::string case_id;
    int set_index = 0;    // 0-3
    int patch_index = 0;  // 0-4
    int label = 0;        // 0-3

    bool operator==(const ManifestRow&) const = default;
};

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::string& path);

struct GrayImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // row-major

    std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
};

// PGM (P2/P5) and PPM (P3/P6), maxval 255 only. Color collapses to
// luma = round(0.299 R + 0.587 G + 0.114 B).
GrayImage read_netpbm(std::istream& in);
GrayImage read_netpbm_file(const std::string& path);
void write_pgm_file(const std::string& path, const GrayImage& img);  // binary P5

// n random 40x40 crops with uniformly drawn top-left corners; overlap is
// allowed. With a background threshold, crops whose mean intensity exceeds
// it are redrawn; the retry budget failing raises an error that reports the
// observed acceptance rate. Returned records carry label 0 until tagged.
std::vector<PatchRecord> extract_patches(const GrayImage& img, std::size_t n,
                                         std::uint64_t seed,
                                         std::optional<double> background_threshold = {});

// Deterministic class-conditional texture; parameters come from the
// versioned table in synth_params.hpp.
PatchRecord synth_generate(int label, std::uint64_t seed);

// cases x 4 sets x 5 patches, classes balanced (case i gets label i mod 4).
// Writes records under <out_dir>/records/ plus <out_dir>/manifest.tsv and
// returns the manifest rows.
std::vector<ManifestRow> write_synth_corpus(const std::string& out_dir, int cases,
                                            std::uint64_t seed);

enum class Split { train, val, test };
const char* split_name(Split s);

struct SplitRow {
    std::string case_id;
    int set_index = 0;
    int patch_index = 0;
    Split split = Split::train;

    bool operator==(const SplitRow&) const = default;
};

struct SplitCounts {
    std::size_t train = 1856;
    std::size_t val = 464;
    std::size_t test_sets = 48;  // whole 5-patch sets, divisible by 4
};

// Test receives whole set-groups, test_sets/4 per class; the remaining
// images are shuffled individually into train/val, which must cover them
// exactly. case_disjoint instead sends whole cases to test (requires
// test_sets divisible by 16, four sets per case).
std::vector<SplitRow> build_split(const std::vector<ManifestRow>& manifest,
                                  const SplitCounts& counts, std::uint64_t seed,
                                  bool case_disjoint = false);

void write_split(const std::string& path, const std::vector<SplitRow>& rows);
std::vector<SplitRow> read_split(const std::string& path);

// x -> x/127.5 - 1, shape [1,40,40].
template <typename T>
Tensor<T> normalize(const PatchRecord& r) {
    Tensor<T> t({1, kPatchSide, kPatchSide});
    for (std::size_t i = 0; i < kPatchPixels; ++i)
        t[i] = static_cast<T>(static_cast<double>(r.pixels[i]) / 127.5 - 1.0);
    return t;
}

enum class AugmentOp { rot90, rot180, rot270, flip_h, flip_v };

// Exact geometric remap; label unchanged. rot90 is clockwise.
PatchRecord augment(const PatchRecord& r, AugmentOp op);

// A record joined with its corpus identity.
struct LabeledSample {
    std::string case_id;
    int set_index = 0;
    int patch_index = 0;
    PatchRecord record;
};

// Reads every row's record file (relative to the manifest's directory) and
// checks the stored label against the manifest label.
std::vector<LabeledSample> load_samples(const std::string& manifest_path,
                                        const std::vector<ManifestRow>& rows);

}  // namespace lymphnet

#endif
