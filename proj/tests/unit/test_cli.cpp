#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "conflab/io.hpp"
#include "conflab/labels.hpp"
#include "conflab/noising.hpp"

// End-to-end tests of the installed binary (path injected by the build).
// Each invocation runs in a fresh shell; outputs land in a scratch tree.

namespace fs = std::filesystem;
using conflab::read_file_to_string;

namespace {

const fs::path kScratch = fs::temp_directory_path() / "conflab_cli_scratch";

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  fs::create_directories(kScratch);
  const fs::path capture = kScratch / ("capture_" + std::to_string(counter++) + ".txt");
  const std::string cmd =
      std::string(CONFLAB_CLI_PATH) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), read_file_to_string(capture)};
}

/// Small two-loss sweep config; output_dir is always overridden via --out.
fs::path write_config() {
  const fs::path path = kScratch / "config.json";
  fs::create_directories(kScratch);
  conflab::write_file_atomic(path, R"({
    "dataset": {
      "kind": "synthetic",
      "synthetic": {"train_per_class": 12, "test_per_class": 12, "seed": 3}
    },
    "labels": {"source": "pairs"},
    "noise": {"kind": "asymmetric", "ratios": [0, 0.5], "trusted_counts": [4], "seed": 9},
    "training": {
      "epochs": 2, "batch_size": 16, "learning_rate": 0.1, "hidden_layers": [8], "seeds": [1],
      "losses": [{"kind": "log_projection", "labels": "confidence"},
                 {"kind": "ce", "labels": "hard"}]
    },
    "output_dir": "unused"
  })");
  return path;
}

int count_partial_files(const fs::path& root) {
  int n = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.path().string().ends_with(".partial")) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("cli: gradcheck passes clean and fails under fault injection") {
  const auto clean = run_cli("gradcheck --probes 120");
  CHECK(clean.exit_code == 0);
  // one verdict line per loss, all passing
  CHECK(std::count(clean.output.begin(), clean.output.end(), '\n') >= 7);
  CHECK(clean.output.find("PASS") != std::string::npos);
  CHECK(clean.output.find("FAIL") == std::string::npos);
  for (const char* name : {"projection", "log_projection", "pce", "ce", "l1", "mse"}) {
    CAPTURE(name);
    CHECK(clean.output.find(name) != std::string::npos);
  }

  const auto corrupt = run_cli("gradcheck --probes 60 --corrupt");
  CHECK(corrupt.exit_code == 1);
  CHECK(corrupt.output.find("FAIL") != std::string::npos);
}

TEST_CASE("cli: gen-labels writes the configured book") {
  const auto config = write_config();
  const fs::path out = kScratch / "labels_out";
  fs::remove_all(out);

  const auto pairs = run_cli("gen-labels --config " + config.string() + " --out " + out.string());
  CHECK(pairs.exit_code == 0);
  CHECK(pairs.output.find("wrote") != std::string::npos);
  const std::string book_json = read_file_to_string(out / "labelbook.json");
  CHECK(book_json.find("5.99999999999999978e-01") != std::string::npos);  // noisy self 0.6
  const auto book = conflab::label_book_from_json(book_json);
  CHECK(book.classes == std::vector<std::string>{"class_0", "class_1", "class_2", "class_3"});

  const fs::path hard_out = kScratch / "labels_hard";
  fs::remove_all(hard_out);
  const auto hard =
      run_cli("gen-labels --hard --config " + config.string() + " --out " + hard_out.string());
  CHECK(hard.exit_code == 0);
  const auto hard_book = conflab::read_label_book(hard_out / "labelbook.json");
  CHECK(hard_book.noisy[0].scores == std::vector<double>{1.0, 0.0, 0.0, 0.0});

  CHECK(count_partial_files(out) == 0);
}

TEST_CASE("cli: make-noise writes one manifest per sweep point, reproducibly") {
  const auto config = write_config();
  const fs::path out_a = kScratch / "noise_a";
  const fs::path out_b = kScratch / "noise_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);

  const auto first = run_cli("make-noise --config " + config.string() + " --out " + out_a.string());
  CHECK(first.exit_code == 0);
  CHECK(fs::exists(out_a / "noise" / "asymmetric_r0_m4.json"));
  CHECK(fs::exists(out_a / "noise" / "asymmetric_r0.5_m4.json"));
  CHECK(first.output.find("flip rate") != std::string::npos);

  // same config, fresh directory: byte-identical manifests
  run_cli("make-noise --config " + config.string() + " --out " + out_b.string());
  CHECK(read_file_to_string(out_a / "noise" / "asymmetric_r0.5_m4.json") ==
        read_file_to_string(out_b / "noise" / "asymmetric_r0.5_m4.json"));

  // --seed overrides the config's noise seed and changes the draw
  const fs::path out_c = kScratch / "noise_c";
  fs::remove_all(out_c);
  run_cli("make-noise --config " + config.string() + " --seed 123 --out " + out_c.string());
  CHECK(read_file_to_string(out_a / "noise" / "asymmetric_r0.5_m4.json") !=
        read_file_to_string(out_c / "noise" / "asymmetric_r0.5_m4.json"));

  // the r=0 manifest records zero flips outside the trusted set too
  const auto records = conflab::read_noise_manifest(out_a / "noise" / "asymmetric_r0_m4.json");
  for (const auto& rec : records) CHECK(rec.observed_class == rec.true_class);
  CHECK(count_partial_files(out_a) == 0);
}

TEST_CASE("cli: train emits per-cell artifacts, reruns bit-identically, report tabulates") {
  const auto config = write_config();
  const fs::path out_a = kScratch / "train_a";
  const fs::path out_b = kScratch / "train_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);

  const auto train = run_cli("train --config " + config.string() + " --out " + out_a.string());
  CHECK(train.exit_code == 0);
  CHECK(fs::exists(out_a / "config.canonical.json"));

  const fs::path lp_cell = out_a / "cells" / "log_projection-conf_r0.5_m4";
  const fs::path ce_cell = out_a / "cells" / "ce-hard_r0.5_m4";
  for (const auto& cell : {lp_cell, ce_cell}) {
    CAPTURE(cell.string());
    CHECK(fs::exists(cell / "trace_seed1.csv"));
    CHECK(fs::exists(cell / "checkpoint_seed1.json"));
    CHECK(fs::exists(cell / "summary.json"));
  }
  const std::string trace = read_file_to_string(lp_cell / "trace_seed1.csv");
  CHECK(trace.rfind("epoch,train_loss,train_acc_observed,train_acc_true,test_acc,lr\n", 0) == 0);
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 3);  // header + 2 epochs

  const auto summary = nlohmann::json::parse(read_file_to_string(lp_cell / "summary.json"));
  CHECK(summary.at("cell").at("loss") == "log_projection");
  CHECK(summary.at("cell").at("labels") == "confidence");
  CHECK(summary.at("per_seed_best").size() == 1);
  CHECK(summary.at("degenerate") == true);

  // a second sweep from the same config reproduces every trace byte
  run_cli("train --config " + config.string() + " --out " + out_b.string());
  for (const char* cell : {"log_projection-conf_r0_m4", "log_projection-conf_r0.5_m4",
                           "ce-hard_r0_m4", "ce-hard_r0.5_m4"}) {
    CAPTURE(cell);
    CHECK(read_file_to_string(out_a / "cells" / cell / "trace_seed1.csv") ==
          read_file_to_string(out_b / "cells" / cell / "trace_seed1.csv"));
  }

  const auto report = run_cli("report --out " + out_a.string());
  CHECK(report.exit_code == 0);
  CHECK(fs::exists(out_a / "report.md"));
  CHECK(fs::exists(out_a / "report.csv"));
  const std::string md = read_file_to_string(out_a / "report.md");
  CHECK(md.find("r=0.5 M=4") != std::string::npos);
  CHECK(md.find("log_projection (confidence)") != std::string::npos);
  CHECK(md.find("ce (hard)") != std::string::npos);
  CHECK(md.find("±") != std::string::npos);

  // derive a label book from one of the checkpoints
  const fs::path model_out = kScratch / "labels_model";
  fs::remove_all(model_out);
  const auto gen = run_cli("gen-labels --config " + config.string() + " --from-model " +
                           (lp_cell / "checkpoint_seed1.json").string() + " --out " +
                           model_out.string());
  CHECK(gen.exit_code == 0);
  CHECK_NOTHROW(conflab::read_label_book(model_out / "labelbook.json"));

  CHECK(count_partial_files(out_a) == 0);
}

TEST_CASE("cli: failures exit nonzero with a diagnostic") {
  const auto no_config = run_cli("train");
  CHECK(no_config.exit_code == 1);
  CHECK(no_config.output.find("error:") != std::string::npos);

  const fs::path bad = kScratch / "bad_config.json";
  conflab::write_file_atomic(bad, "{\"dataset\": {\"kind\": \"imagenet\"}}");
  const auto bad_cfg = run_cli("train --config " + bad.string());
  CHECK(bad_cfg.exit_code == 1);
  CHECK(bad_cfg.output.find("error:") != std::string::npos);

  const auto missing = run_cli("train --config /no/such/file.json");
  CHECK(missing.exit_code != 0);

  const fs::path empty = kScratch / "empty_dir";
  fs::create_directories(empty);
  const auto report = run_cli("report --out " + empty.string());
  CHECK(report.exit_code == 1);
  CHECK(report.output.find("error:") != std::string::npos);

  const auto unknown = run_cli("frobnicate");
  CHECK(unknown.exit_code != 0);
}
