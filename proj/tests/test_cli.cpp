#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "support.hpp"

// Exercises the installed binary end to end through its command line; the
// path arrives via LYMPHNET_CLI_PATH from the build system.

namespace {

using testsupport::CommandResult;
using testsupport::run_command;
using testsupport::TempDir;

std::string cli() { return std::string("\"") + LYMPHNET_CLI_PATH + "\""; }

bool exists(const std::string& p) { return std::filesystem::exists(p); }

}  // namespace

TEST_CASE("synth writes a reproducible corpus") {
    TempDir dir("cli_synth");
    const std::string a = dir.file("a"), b = dir.file("b"), c = dir.file("c");
    CommandResult r1 = run_command(cli() + " synth --out " + a + " --cases 4 --seed 5");
    CHECK(r1.exit_code == 0);
    CHECK(r1.output.find("synth: wrote 80 records for 4 cases") != std::string::npos);
    CHECK(exists(a + "/manifest.tsv"));
    CHECK(exists(a + "/records/c0000_s0_p0.txt"));
    CHECK(exists(a + "/synth.config"));

    CHECK(run_command(cli() + " synth --out " + b + " --cases 4 --seed 5").exit_code == 0);
    CHECK(run_command(cli() + " synth --out " + c + " --cases 4 --seed 6").exit_code == 0);
    CHECK(testsupport::read_file(a + "/manifest.tsv") ==
          testsupport::read_file(b + "/manifest.tsv"));
    CHECK(testsupport::read_file(a + "/records/c0003_s2_p4.txt") ==
          testsupport::read_file(b + "/records/c0003_s2_p4.txt"));
    CHECK(testsupport::read_file(a + "/records/c0003_s2_p4.txt") !=
          testsupport::read_file(c + "/records/c0003_s2_p4.txt"));

    // the resolved configuration records what actually ran
    const std::string config = testsupport::read_file(a + "/synth.config");
    CHECK(config.find("seed=5") != std::string::npos);
    CHECK(config.find("cases=4") != std::string::npos);
}

TEST_CASE("synth rejects a case count not divisible by 4") {
    TempDir dir("cli_synth_bad");
    CommandResult r = run_command(cli() + " synth --out " + dir.file("x") + " --cases 6");
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("error:") != std::string::npos);
    CHECK(r.output.find("divisible by 4") != std::string::npos);
}

TEST_CASE("extract cuts patches from a PGM image") {
    TempDir dir("cli_extract");
    // 60x50 gradient image in ascii PGM form
    const std::string img = dir.file("slide.pgm");
    {
        std::ofstream out(img);
        out << "P2\n50 60\n255\n";
        for (int r = 0; r < 60; ++r)
            for (int c = 0; c < 50; ++c) out << ((r * 3 + c) % 256) << (c == 49 ? '\n' : ' ');
    }
    const std::string corpus = dir.file("corpus");
    CommandResult r1 = run_command(cli() + " extract --image " + img +
                                   " --n 5 --label 2 --out " + corpus + " --seed 9");
    CHECK(r1.exit_code == 0);
    CHECK(r1.output.find("extract: wrote 5 records for case slide") != std::string::npos);
    CHECK(exists(corpus + "/manifest.tsv"));
    CHECK(exists(corpus + "/extract.config"));

    // appending the other half of the case continues the patch numbering
    CommandResult r2 = run_command(cli() + " extract --image " + img +
                                   " --n 5 --label 2 --out " + corpus + " --seed 10");
    CHECK(r2.exit_code == 0);
    const std::string manifest = testsupport::read_file(corpus + "/manifest.tsv");
    CHECK(manifest.find("slide\t0\t0\t2") != std::string::npos);
    CHECK(manifest.find("slide\t1\t4\t2") != std::string::npos);  // second set filled

    SUBCASE("label out of range fails cleanly") {
        CommandResult bad = run_command(cli() + " extract --image " + img +
                                        " --n 1 --label 4 --out " + dir.file("z"));
        CHECK(bad.exit_code != 0);
        CHECK(bad.output.find("error:") != std::string::npos);
    }
}

TEST_CASE("gradcheck passes and writes its report") {
    TempDir dir("cli_gradcheck");
    const std::string report = dir.file("report.tsv");
    CommandResult r = run_command(cli() + " gradcheck --seed 7 --out " + report);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("gradcheck: max_rel_err=") != std::string::npos);
    CHECK(r.output.find("PASS") != std::string::npos);
    CHECK(exists(report));
    const std::string body = testsupport::read_file(report);
    CHECK(body.find("conv1.kernels") != std::string::npos);
    CHECK(body.find("input") != std::string::npos);
    CHECK(exists(report + ".config"));
}

TEST_CASE("the full pipeline runs end to end") {
    TempDir dir("cli_pipeline");
    const std::string corpus = dir.file("corpus");
    const std::string split = dir.file("split.tsv");
    const std::string run = dir.file("run");
    const std::string evalout = dir.file("evalout");

    CHECK(run_command(cli() + " synth --out " + corpus + " --cases 16 --seed 3").exit_code == 0);

    CommandResult sp = run_command(cli() + " split --manifest " + corpus +
                                   "/manifest.tsv --out " + split +
                                   " --train 224 --val 56 --test-sets 8 --seed 3");
    CHECK(sp.exit_code == 0);
    CHECK(sp.output.find("split: train=224 val=56 test=40 (8 sets)") != std::string::npos);
    CHECK(exists(split));
    CHECK(exists(split + ".config"));

    CommandResult tr = run_command(cli() + " train --manifest " + corpus +
                                   "/manifest.tsv --split " + split + " --out " + run +
                                   " --epochs 2 --batch-size 16 --seed 3 --threads 2");
    CHECK(tr.exit_code == 0);
    CHECK(tr.output.find("train: 2 epochs, best val_acc=") != std::string::npos);
    CHECK(exists(run + "/model.bin"));
    CHECK(exists(run + "/history.tsv"));
    CHECK(exists(run + "/train.config"));
    const std::string history = testsupport::read_file(run + "/history.tsv");
    CHECK(history.rfind("epoch\ttrain_loss", 0) == 0);

    CommandResult ev = run_command(cli() + " eval --manifest " + corpus +
                                   "/manifest.tsv --split " + split + " --model " + run +
                                   "/model.bin --out " + evalout);
    CHECK(ev.exit_code == 0);
    CHECK(ev.output.find("image_acc=") != std::string::npos);
    CHECK(ev.output.find("set_acc=") != std::string::npos);
    CHECK(exists(evalout + "/image_confusion.tsv"));
    CHECK(exists(evalout + "/set_confusion.tsv"));
    CHECK(exists(evalout + "/sets_detail.tsv"));
    CHECK(exists(evalout + "/eval.config"));

    CommandResult pr = run_command(cli() + " predict --model " + run + "/model.bin --record " +
                                   corpus + "/records/c0002_s1_p3.txt");
    CHECK(pr.exit_code == 0);
    CHECK(pr.output.find("predicted_class=") != std::string::npos);
    CHECK(pr.output.find("probabilities=") != std::string::npos);

    SUBCASE("training is reproducible across processes") {
        const std::string run2 = dir.file("run2");
        CHECK(run_command(cli() + " train --manifest " + corpus + "/manifest.tsv --split " +
                          split + " --out " + run2 +
                          " --epochs 2 --batch-size 16 --seed 3 --threads 1")
                  .exit_code == 0);
        CHECK(testsupport::read_file(run + "/model.bin") ==
              testsupport::read_file(run2 + "/model.bin"));
        CHECK(testsupport::read_file(run + "/history.tsv") ==
              testsupport::read_file(run2 + "/history.tsv"));
    }
    SUBCASE("the scalar backend is selectable") {
        CommandResult sc = run_command(cli() + " --backend scalar predict --model " + run +
                                       "/model.bin --record " + corpus +
                                       "/records/c0002_s1_p3.txt");
        CHECK(sc.exit_code == 0);
        CHECK(sc.output.find("predicted_class=") != std::string::npos);
    }
    SUBCASE("an unknown backend fails cleanly") {
        CommandResult bad = run_command(cli() + " --backend neon gradcheck");
        CHECK(bad.exit_code != 0);
        CHECK(bad.output.find("not in {auto,scalar,avx2}") != std::string::npos);
    }
}

TEST_CASE("options can come from a config file") {
    TempDir dir("cli_config");
    const std::string cfg = dir.file("run.cfg");
    {
        std::ofstream out(cfg);
        out << "seed=11\n";
    }
    const std::string a = dir.file("a"), b = dir.file("b");
    CHECK(run_command(cli() + " --config " + cfg + " synth --out " + a + " --cases 4")
              .exit_code == 0);
    CHECK(run_command(cli() + " synth --out " + b + " --cases 4 --seed 11").exit_code == 0);
    CHECK(testsupport::read_file(a + "/records/c0001_s0_p0.txt") ==
          testsupport::read_file(b + "/records/c0001_s0_p0.txt"));
}

TEST_CASE("missing subcommand and bad flags are reported") {
    CommandResult none = run_command(cli());
    CHECK(none.exit_code != 0);
    CommandResult bogus = run_command(cli() + " transmogrify");
    CHECK(bogus.exit_code != 0);
    CommandResult missing = run_command(cli() + " train");
    CHECK(missing.exit_code != 0);
}
