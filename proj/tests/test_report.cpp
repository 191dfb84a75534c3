#include <gtest/gtest.h>

#include <filesystem>

#include "bdan/report.hpp"

using namespace bdan;

TEST(Overrides, DottedKeysAndLastWriterWins) {
    json cfg{{"epochs", 5}, {"nested", {{"a", 1}}}};
    cfg = apply_overrides(cfg, {"epochs=7", "nested.a=2", "nested.b=\"x\"", "name=plain", "epochs=9", "flag=true"});
    EXPECT_EQ(cfg["epochs"], 9);
    EXPECT_EQ(cfg["nested"]["a"], 2);
    EXPECT_EQ(cfg["nested"]["b"], "x");
    EXPECT_EQ(cfg["name"], "plain");
    EXPECT_EQ(cfg["flag"], true);
    EXPECT_THROW(apply_overrides(cfg, {"novalue"}), ConfigError);
}

TEST(Config, UnknownKeyNamed) {
    try {
        check_known_keys(json{{"epochs", 1}, {"bogus", 2}}, train_config_keys());
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "bogus");
    }
}

TEST(Config, TrainRoundTrip) {
    TrainConfig c;
    c.epochs = 3;
    c.w_s = 0.25;
    c.stages = 1;
    c.optimizer = OptimizerKind::momentum;
    const TrainConfig d = train_config_from_json(to_json(c));
    EXPECT_EQ(to_json(d), to_json(c));
}

TEST(Config, BadValuesNameTheKey) {
    auto key_of = [](const json& j) {
        try {
            train_config_from_json(j);
        } catch (const ConfigError& e) {
            return e.key();
        }
        return std::string();
    };
    EXPECT_EQ(key_of({{"batch_size", 1}}), "batch_size");
    EXPECT_EQ(key_of({{"lr", "fast"}}), "lr");
    EXPECT_EQ(key_of({{"optimizer", "sgd"}}), "optimizer");
    EXPECT_EQ(key_of({{"stages", 3}}), "stages");
}

TEST(Config, DriftKeys) {
    const DriftConfig d = drift_config_from_json({{"electrodes", 5}, {"gain_step", 0.3}});
    EXPECT_EQ(d.electrodes, 5u);
    EXPECT_EQ(d.gain_step, 0.3);
    EXPECT_THROW(drift_config_from_json({{"electrodes", 2}}), ConfigError);
}

TEST(Results, CsvLayout) {
    TaskResult a;
    a.source_subject = "S1";
    a.target_subject = "S2";
    a.fold_accuracies = {0.5, 1.0};
    a.mean_accuracy = 0.75;
    TaskResult b = a;
    b.source_subject = "S2";
    b.target_subject = "S1";
    b.fold_accuracies = {0.25, 0.125};
    b.mean_accuracy = 0.1875;
    EXPECT_EQ(results_csv({a, b}),
              "task,fold1,fold2,mean\n"
              "S1->S2,0.500000,1.000000,0.750000\n"
              "S2->S1,0.250000,0.125000,0.187500\n");
}

TEST(Results, JsonRoundTrip) {
    TaskResult a;
    a.source_subject = "A";
    a.target_subject = "B";
    a.fold_accuracies = {0.1, 0.2, 0.3};
    a.mean_accuracy = 0.2;
    const TaskResult b = task_result_from_json(to_json(a));
    EXPECT_EQ(b.fold_accuracies, a.fold_accuracies);
    EXPECT_EQ(b.mean_accuracy, a.mean_accuracy);
    EXPECT_EQ(b.target_subject, "B");
}

TEST(LossReportJson, Fields) {
    LossReport r;
    r.step = 3;
    r.L_cls = 0.5;
    r.Ls1 = 1;
    r.Ls1_enabled = true;
    r.J = 1.5;
    r.clamp_hits = 2;
    const json j = to_json(r);
    for (const char* k : {"step", "L_cls", "Ls1", "Ls2", "Lt1", "Lt2", "J", "lambda", "denom", "clamp_hits", "enabled"})
        EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j["enabled"]["Ls1"], true);
    EXPECT_EQ(j["enabled"]["Lt2"], false);
    EXPECT_TRUE(j["lambda"]["Ls1"].contains("lambda_ag"));
}

TEST(Manifest, Crc32KnownValue) {
    const auto dir = std::filesystem::temp_directory_path() / "bdan_report_manifest";
    std::filesystem::create_directories(dir);
    write_text(dir / "check.txt", "123456789");
    EXPECT_EQ(file_checksum(dir / "check.txt"), "cbf43926");
    write_manifest(dir, {"check.txt"});
    const json m = read_json(dir / "manifest.json");
    EXPECT_EQ(m["files"][0]["file"], "check.txt");
    EXPECT_EQ(m["files"][0]["crc32"], "cbf43926");
    EXPECT_EQ(m["files"][0]["bytes"], 9);
    std::filesystem::remove_all(dir);
    EXPECT_THROW(read_json(dir / "manifest.json"), IoError);
}
