#include "lymphnet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <utility>

#include "lymphnet/errors.hpp"
#include "lymphnet/rng.hpp"
#include "lymphnet/synth_params.hpp"

namespace fs = std::filesystem;

namespace lymphnet {

namespace {

const char* const kClassNames[kNumClasses] = {"Benign", "DLBCL", "BL", "SLL"};

long parse_int(std::string_view tok, const std::string& what) {
    long v = 0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
        throw ParseError(what + ": non-integer token '" + std::string(tok) + "'");
    return v;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string chop_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return in;
}

}  // namespace

const char* class_name(int label) {
    if (label < 0 || label >= kNumClasses)
        throw std::invalid_argument("class_name: label " + std::to_string(label) +
                                    " out of range 0-3");
    return kClassNames[label];
}

std::size_t write_record(const PatchRecord& r, std::ostream& out) {
    std::string buf;
    buf.reserve(4 * (kPatchPixels + 1));
    buf += std::to_string(static_cast<int>(r.label));
    for (std::size_t i = 0; i < kPatchPixels; ++i) {
        buf += ',';
        buf += std::to_string(static_cast<int>(r.pixels[i]));
    }
    buf += '\n';
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    return buf.size();
}

PatchRecord parse_record_line(const std::string& line) {
    // Accept the serialized form with or without its trailing newline.
    std::string clean = line;
    if (!clean.empty() && clean.back() == '\n') clean.pop_back();
    clean = chop_cr(std::move(clean));
    const auto toks = split_on(clean, ',');  // views into `clean`
    if (toks.size() != kPatchPixels + 1)
        throw ParseError("expected 1601 entries, found " + std::to_string(toks.size()));
    PatchRecord r;
    const long label = parse_int(toks[0], "entry 0");
    if (label < 0 || label >= kNumClasses)
        throw ParseError("entry 0: label " + std::to_string(label) + " out of range 0-3");
    r.label = static_cast<std::uint8_t>(label);
    for (std::size_t i = 0; i < kPatchPixels; ++i) {
        const std::string what = "entry " + std::to_string(i + 1);
        const long v = parse_int(toks[i + 1], what);
        if (v < 0 || v > 255)
            throw ParseError(what + ": intensity " + std::to_string(v) + " out of range 0-255");
        r.pixels[i] = static_cast<std::uint8_t>(v);
    }
    return r;
}

void write_record_file(const std::string& path, const PatchRecord& r) {
    auto out = open_out(path);
    write_record(r, out);
    if (!out) throw IoError("write failed for '" + path + "'");
}

PatchRecord read_record_file(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("'" + path + "': empty record file");
    try {
        return parse_record_line(line);
    } catch (const ParseError& e) {
        throw ParseError("'" + path + "': " + e.what());
    }
}

static const char* const kManifestHeader = "path\tcase_id\tset_index\tpatch_index\tlabel";

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
    auto out = open_out(path);
    out << kManifestHeader << '\n';
    for (const auto& r : rows)
        out << r.path << '\t' << r.case_id << '\t' << r.set_index << '\t' << r.patch_index
            << '\t' << r.label << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || chop_cr(line) != kManifestHeader)
        throw ParseError("'" + path + "': missing or wrong manifest header");
    std::vector<ManifestRow> rows;
    std::set<std::tuple<std::string, int, int>> seen;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string clean = chop_cr(line);
        if (clean.empty()) continue;
        const std::string where = "'" + path + "' line " + std::to_string(lineno);
        const auto toks = split_on(clean, '\t');
        if (toks.size() != 5)
            throw ParseError(where + ": expected 5 fields, found " + std::to_string(toks.size()));
        ManifestRow r;
        r.path = std::string(toks[0]);
        r.case_id = std::string(toks[1]);
        r.set_index = static_cast<int>(parse_int(toks[2], where + ": set_index"));
        r.patch_index = static_cast<int>(parse_int(toks[3], where + ": patch_index"));
        r.label = static_cast<int>(parse_int(toks[4], where + ": label"));
        if (r.path.empty() || r.case_id.empty())
            throw ParseError(where + ": empty path or case_id");
        if (r.set_index < 0 || r.set_index >= kSetsPerCase)
            throw ParseError(where + ": set_index " + std::to_string(r.set_index) +
                             " out of range 0-3");
        if (r.patch_index < 0 || r.patch_index >= kPatchesPerSet)
            throw ParseError(where + ": patch_index " + std::to_string(r.patch_index) +
                             " out of range 0-4");
        if (r.label < 0 || r.label >= kNumClasses)
            throw ParseError(where + ": label " + std::to_string(r.label) + " out of range 0-3");
        if (!seen.insert({r.case_id, r.set_index, r.patch_index}).second)
            throw ParseError(where + ": duplicate row for (" + r.case_id + ", set " +
                             std::to_string(r.set_index) + ", patch " +
                             std::to_string(r.patch_index) + ")");
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

// Token scanner for netpbm headers and plain rasters: skips whitespace and
// '#' comments (which run to end of line).
long pbm_token(std::istream& in, const char* what) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF) throw ParseError(std::string("netpbm: missing ") + what);
    std::string tok;
    while (c != EOF && !std::isspace(c) && c != '#') {
        tok += static_cast<char>(c);
        c = in.get();
    }
    if (c != EOF) in.unget();
    return parse_int(tok, std::string("netpbm: ") + what);
}

std::uint8_t luma(int r, int g, int b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    return static_cast<std::uint8_t>(std::lround(y));
}

}  // namespace

GrayImage read_netpbm(std::istream& in) {
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != 'P' || (m1 != '2' && m1 != '3' && m1 != '5' && m1 != '6'))
        throw ParseError("netpbm: bad magic, expected P2/P3/P5/P6");
    const bool color = (m1 == '3' || m1 == '6');
    const bool binary = (m1 == '5' || m1 == '6');

    const long w = pbm_token(in, "width");
    const long h = pbm_token(in, "height");
    const long maxval = pbm_token(in, "maxval");
    if (w <= 0 || h <= 0)
        throw ParseError("netpbm: bad dimensions " + std::to_string(w) + "x" + std::to_string(h));
    if (maxval != 255)
        throw ParseError("netpbm: maxval " + std::to_string(maxval) + " unsupported, expected 255");

    GrayImage img;
    img.width = static_cast<std::size_t>(w);
    img.height = static_cast<std::size_t>(h);
    img.pixels.resize(img.width * img.height);
    const std::size_t samples = img.pixels.size() * (color ? 3 : 1);

    if (binary) {
        const int sep = in.get();  // single whitespace byte before the raster
        if (sep == EOF || !std::isspace(sep)) throw ParseError("netpbm: missing raster separator");
        std::vector<std::uint8_t> raw(samples);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(samples));
        if (static_cast<std::size_t>(in.gcount()) != samples)
            throw ParseError("netpbm: truncated pixel data, expected " + std::to_string(samples) +
                             " bytes, got " + std::to_string(in.gcount()));
        if (color) {
            for (std::size_t i = 0; i < img.pixels.size(); ++i)
                img.pixels[i] = luma(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]);
        } else {
            img.pixels.assign(raw.begin(), raw.end());
        }
    } else {
        std::vector<int> vals(samples);
        for (std::size_t i = 0; i < samples; ++i) {
            const long v = pbm_token(in, "pixel value");
            if (v < 0 || v > 255)
                throw ParseError("netpbm: sample " + std::to_string(v) + " out of range 0-255");
            vals[i] = static_cast<int>(v);
        }
        if (color) {
            for (std::size_t i = 0; i < img.pixels.size(); ++i)
                img.pixels[i] = luma(vals[3 * i], vals[3 * i + 1], vals[3 * i + 2]);
        } else {
            for (std::size_t i = 0; i < img.pixels.size(); ++i)
                img.pixels[i] = static_cast<std::uint8_t>(vals[i]);
        }
    }
    return img;
}

GrayImage read_netpbm_file(const std::string& path) {
    auto in = open_in(path, std::ios::binary);
    try {
        return read_netpbm(in);
    } catch (const ParseError& e) {
        throw ParseError("'" + path + "': " + e.what());
    }
}

void write_pgm_file(const std::string& path, const GrayImage& img) {
    auto out = open_out(path, std::ios::binary);
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<PatchRecord> extract_patches(const GrayImage& img, std::size_t n, std::uint64_t seed,
                                         std::optional<double> background_threshold) {
    if (img.height < kPatchSide || img.width < kPatchSide)
        throw ShapeError("extract_patches: image " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) + " smaller than " +
                         std::to_string(kPatchSide) + "x" + std::to_string(kPatchSide));
    const std::uint32_t rows = static_cast<std::uint32_t>(img.height - kPatchSide + 1);
    const std::uint32_t cols = static_cast<std::uint32_t>(img.width - kPatchSide + 1);
    auto eng = rng::make_engine(seed);

    std::vector<PatchRecord> out;
    out.reserve(n);
    const std::size_t budget = 200 * n + 1000;
    std::size_t draws = 0;
    while (out.size() < n) {
        if (draws >= budget) {
            char rate[32];
            std::snprintf(rate, sizeof rate, "%.2f%%",
                          100.0 * static_cast<double>(out.size()) / static_cast<double>(draws));
            throw std::runtime_error("extract_patches: retry budget exhausted after " +
                                     std::to_string(draws) + " draws with " +
                                     std::to_string(out.size()) + " accepted (acceptance rate " +
                                     rate + ")");
        }
        ++draws;
        const std::size_t r0 = rng::uniform_u32(eng, rows);
        const std::size_t c0 = rng::uniform_u32(eng, cols);
        PatchRecord rec;
        std::uint64_t sum = 0;
        for (std::size_t r = 0; r < kPatchSide; ++r)
            for (std::size_t c = 0; c < kPatchSide; ++c) {
                const std::uint8_t v = img.at(r0 + r, c0 + c);
                rec.pixels[r * kPatchSide + c] = v;
                sum += v;
            }
        if (background_threshold &&
            static_cast<double>(sum) / kPatchPixels > *background_threshold)
            continue;
        out.push_back(rec);
    }
    return out;
}

PatchRecord synth_generate(int label, std::uint64_t seed) {
    if (label < 0 || label >= kNumClasses)
        throw std::invalid_argument("synth_generate: label " + std::to_string(label) +
                                    " out of range 0-3");
    const synth::ClassParams& p = synth::kClassTable[label];
    auto eng = rng::make_engine(seed);

    double buf[kPatchPixels];
    for (auto& v : buf) v = p.base;

    const int span = static_cast<int>(kPatchSide) - 2 * synth::kMargin + 1;
    const int count =
        p.count_min + static_cast<int>(rng::uniform_u32(
                          eng, static_cast<std::uint32_t>(p.count_max - p.count_min + 1)));
    const int reach = static_cast<int>(std::ceil(3.0 * p.sigma));
    const double inv2s2 = 1.0 / (2.0 * p.sigma * p.sigma);
    for (int f = 0; f < count; ++f) {
        const int cy = synth::kMargin + static_cast<int>(rng::uniform_u32(eng, span));
        const int cx = synth::kMargin + static_cast<int>(rng::uniform_u32(eng, span));
        const int r0 = std::max(0, cy - reach), r1 = std::min<int>(kPatchSide - 1, cy + reach);
        const int c0 = std::max(0, cx - reach), c1 = std::min<int>(kPatchSide - 1, cx + reach);
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) {
                const double d2 = static_cast<double>((r - cy) * (r - cy) + (c - cx) * (c - cx));
                buf[static_cast<std::size_t>(r) * kPatchSide + c] +=
                    p.depth * std::exp(-d2 * inv2s2);
            }
    }

    PatchRecord rec;
    rec.label = static_cast<std::uint8_t>(label);
    for (std::size_t i = 0; i < kPatchPixels; ++i) {
        const int noise = static_cast<int>(rng::uniform_u32(
                              eng, static_cast<std::uint32_t>(2 * synth::kNoiseAmplitude + 1))) -
                          synth::kNoiseAmplitude;
        const long v = std::lround(buf[i]) + noise;
        rec.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0l, 255l));
    }
    return rec;
}

namespace {

std::string make_case_id(int c) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%04d", c);
    return buf;
}

}  // namespace

std::vector<ManifestRow> write_synth_corpus(const std::string& out_dir, int cases,
                                            std::uint64_t seed) {
    if (cases <= 0 || cases % kNumClasses != 0)
        throw std::invalid_argument("write_synth_corpus: cases must be positive and divisible by " +
                                    std::to_string(kNumClasses) + ", got " +
                                    std::to_string(cases));
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "records", ec);
    if (ec) throw IoError("cannot create '" + out_dir + "/records': " + ec.message());

    std::vector<ManifestRow> rows;
    rows.reserve(static_cast<std::size_t>(cases) * kSetsPerCase * kPatchesPerSet);
    for (int c = 0; c < cases; ++c) {
        const int label = c % kNumClasses;
        const std::string case_id = make_case_id(c);
        for (int s = 0; s < kSetsPerCase; ++s) {
            for (int p = 0; p < kPatchesPerSet; ++p) {
                const std::uint64_t ordinal =
                    (static_cast<std::uint64_t>(c) * kSetsPerCase + s) * kPatchesPerSet + p;
                const PatchRecord rec = synth_generate(label, rng::derive(seed, ordinal));
                ManifestRow row;
                row.path = "records/" + case_id + "_s" + std::to_string(s) + "_p" +
                           std::to_string(p) + ".txt";
                row.case_id = case_id;
                row.set_index = s;
                row.patch_index = p;
                row.label = label;
                write_record_file((fs::path(out_dir) / row.path).string(), rec);
                rows.push_back(std::move(row));
            }
        }
    }
    write_manifest((fs::path(out_dir) / "manifest.tsv").string(), rows);
    return rows;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

namespace {

Split parse_split(std::string_view tok, const std::string& where) {
    if (tok == "train") return Split::train;
    if (tok == "val") return Split::val;
    if (tok == "test") return Split::test;
    throw ParseError(where + ": unknown split '" + std::string(tok) + "'");
}

using GroupKey = std::pair<std::string, int>;  // (case_id, set_index)

}  // namespace

std::vector<SplitRow> build_split(const std::vector<ManifestRow>& manifest,
                                  const SplitCounts& counts, std::uint64_t seed,
                                  bool case_disjoint) {
    if (counts.test_sets % kNumClasses != 0)
        throw std::invalid_argument("build_split: test_sets must be divisible by 4, got " +
                                    std::to_string(counts.test_sets));

    // Group rows into 5-patch sets and check the per-set invariants.
    std::map<GroupKey, std::vector<const ManifestRow*>> groups;
    for (const auto& r : manifest) groups[{r.case_id, r.set_index}].push_back(&r);
    std::vector<std::vector<GroupKey>> by_class(kNumClasses);
    for (const auto& [key, rows] : groups) {
        if (rows.size() != kPatchesPerSet)
            throw std::invalid_argument("build_split: set group (" + key.first + ", set " +
                                        std::to_string(key.second) + ") has " +
                                        std::to_string(rows.size()) + " rows, expected 5");
        for (const auto* r : rows)
            if (r->label != rows[0]->label)
                throw std::invalid_argument("build_split: set group (" + key.first + ", set " +
                                            std::to_string(key.second) + ") mixes labels");
        by_class[rows[0]->label].push_back(key);
    }

    // Choose test set-groups, stratified per class. Group lists come out of
    // the map already sorted, so the shuffle is the only order dependence.
    const std::size_t sets_per_class = counts.test_sets / kNumClasses;
    std::set<GroupKey> test_groups;
    if (!case_disjoint) {
        for (int cls = 0; cls < kNumClasses; ++cls) {
            auto& list = by_class[cls];
            if (list.size() < sets_per_class)
                throw std::invalid_argument("build_split: class " + std::to_string(cls) +
                                            " has only " + std::to_string(list.size()) +
                                            " sets, need " + std::to_string(sets_per_class) +
                                            " for test");
            auto eng = rng::make_engine(rng::derive(seed, 1000 + cls));
            rng::shuffle(list, eng);
            for (std::size_t i = 0; i < sets_per_class; ++i) test_groups.insert(list[i]);
        }
    } else {
        if (counts.test_sets % (kNumClasses * kSetsPerCase) != 0)
            throw std::invalid_argument(
                "build_split: case-disjoint mode requires test_sets divisible by 16, got " +
                std::to_string(counts.test_sets));
        const std::size_t cases_per_class = counts.test_sets / (kNumClasses * kSetsPerCase);
        for (int cls = 0; cls < kNumClasses; ++cls) {
            std::map<std::string, std::vector<GroupKey>> by_case;
            for (const auto& key : by_class[cls]) by_case[key.first].push_back(key);
            std::vector<std::string> case_ids;
            for (const auto& [id, keys] : by_case) case_ids.push_back(id);
            if (case_ids.size() < cases_per_class)
                throw std::invalid_argument("build_split: class " + std::to_string(cls) +
                                            " has only " + std::to_string(case_ids.size()) +
                                            " cases, need " + std::to_string(cases_per_class) +
                                            " for test");
            auto eng = rng::make_engine(rng::derive(seed, 2000 + cls));
            rng::shuffle(case_ids, eng);
            for (std::size_t i = 0; i < cases_per_class; ++i) {
                const auto& keys = by_case[case_ids[i]];
                if (keys.size() != kSetsPerCase)
                    throw std::invalid_argument("build_split: case " + case_ids[i] + " has " +
                                                std::to_string(keys.size()) +
                                                " sets, expected 4 for case-disjoint test");
                test_groups.insert(keys.begin(), keys.end());
            }
        }
    }

    // Remaining images are split individually; train+val must cover exactly.
    std::vector<std::tuple<std::string, int, int>> rest;
    for (const auto& [key, rows] : groups) {
        if (test_groups.count(key)) continue;
        for (const auto* r : rows) rest.emplace_back(r->case_id, r->set_index, r->patch_index);
    }
    std::sort(rest.begin(), rest.end());
    if (counts.train + counts.val != rest.size())
        throw std::invalid_argument("build_split: train+val = " +
                                    std::to_string(counts.train + counts.val) + " but " +
                                    std::to_string(rest.size()) +
                                    " images remain after test selection");
    auto eng = rng::make_engine(rng::derive(seed, 7));
    rng::shuffle(rest, eng);

    std::map<std::tuple<std::string, int, int>, Split> assign;
    for (std::size_t i = 0; i < rest.size(); ++i)
        assign[rest[i]] = i < counts.train ? Split::train : Split::val;
    for (const auto& key : test_groups)
        for (int p = 0; p < kPatchesPerSet; ++p)
            assign[{key.first, key.second, p}] = Split::test;

    std::vector<SplitRow> out;
    out.reserve(assign.size());
    for (const auto& [key, split] : assign)
        out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), split});
    return out;
}

static const char* const kSplitHeader = "case_id\tset_index\tpatch_index\tsplit";

void write_split(const std::string& path, const std::vector<SplitRow>& rows) {
    auto out = open_out(path);
    out << kSplitHeader << '\n';
    for (const auto& r : rows)
        out << r.case_id << '\t' << r.set_index << '\t' << r.patch_index << '\t'
            << split_name(r.split) << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<SplitRow> read_split(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || chop_cr(line) != kSplitHeader)
        throw ParseError("'" + path + "': missing or wrong split header");
    std::vector<SplitRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string clean = chop_cr(line);
        if (clean.empty()) continue;
        const std::string where = "'" + path + "' line " + std::to_string(lineno);
        const auto toks = split_on(clean, '\t');
        if (toks.size() != 4)
            throw ParseError(where + ": expected 4 fields, found " + std::to_string(toks.size()));
        SplitRow r;
        r.case_id = std::string(toks[0]);
        r.set_index = static_cast<int>(parse_int(toks[1], where + ": set_index"));
        r.patch_index = static_cast<int>(parse_int(toks[2], where + ": patch_index"));
        r.split = parse_split(toks[3], where);
        rows.push_back(std::move(r));
    }
    return rows;
}

PatchRecord augment(const PatchRecord& r, AugmentOp op) {
    const std::size_t N = kPatchSide;
    PatchRecord out;
    out.label = r.label;
    auto in_at = [&](std::size_t row, std::size_t col) { return r.pixels[row * N + col]; };
    for (std::size_t row = 0; row < N; ++row) {
        for (std::size_t col = 0; col < N; ++col) {
            std::uint8_t v = 0;
            switch (op) {
                case AugmentOp::rot90: v = in_at(N - 1 - col, row); break;
                case AugmentOp::rot180: v = in_at(N - 1 - row, N - 1 - col); break;
                case AugmentOp::rot270: v = in_at(col, N - 1 - row); break;
                case AugmentOp::flip_h: v = in_at(row, N - 1 - col); break;
                case AugmentOp::flip_v: v = in_at(N - 1 - row, col); break;
            }
            out.pixels[row * N + col] = v;
        }
    }
    return out;
}

std::vector<LabeledSample> load_samples(const std::string& manifest_path,
                                        const std::vector<ManifestRow>& rows) {
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<LabeledSample> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        LabeledSample s;
        s.case_id = row.case_id;
        s.set_index = row.set_index;
        s.patch_index = row.patch_index;
        s.record = read_record_file((dir / row.path).string());
        if (s.record.label != row.label)
            throw ParseError("'" + row.path + "': record label " +
                             std::to_string(s.record.label) + " disagrees with manifest label " +
                             std::to_string(row.label));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace lymphnet
