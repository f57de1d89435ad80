#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, std::string* output = nullptr) {
    const fs::path log = fs::temp_directory_path() / "numod_cli_log.txt";
    const std::string cmd = std::string(NUMOD_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    if(output) {
        std::ifstream in(log);
        std::stringstream ss;
        ss << in.rdbuf();
        *output = ss.str();
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "numod_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// A short fixture shared by the tests below.
fs::path dataset() {
    static const fs::path d = [] {
        const fs::path p = work_dir() / "data";
        if(run("synth -o " + p.string() + " --frames 8") != 0)
            throw std::runtime_error("synth failed");
        return p;
    }();
    return d;
}

const std::string kQuickTrain = " --epochs 3 --minibatch 4 --angle 1.0 --seed 3 -q";

} // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("train -o " + (work_dir() / "x").string()), 2);
    EXPECT_EQ(run("train -i " + dataset().string() + " -o " + (work_dir() / "x").string() + " --mode sideways"), 2);
    EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, MissingInputLeavesNoOutput) {
    const fs::path out = work_dir() / "should_not_exist";
    std::string log;
    EXPECT_EQ(run("train -i " + (work_dir() / "nowhere").string() + " -o " + out.string(), &log), 2);
    EXPECT_FALSE(fs::exists(out));
    EXPECT_NE(log.find("nowhere"), std::string::npos);
}

TEST(Cli, SynthWritesDataset) {
    const fs::path d = dataset();
    EXPECT_TRUE(fs::exists(d / "input" / "000007.png"));
    EXPECT_TRUE(fs::exists(d / "groundtruth" / "000007.png"));
    const auto events = read_json(d / "events.json");
    EXPECT_EQ(events["frames"], 8);
    EXPECT_FALSE(events["events"].empty());
}

TEST(Cli, BatchTrainWritesOutputsDeterministically) {
    const fs::path a = work_dir() / "batch_a", b = work_dir() / "batch_b";
    ASSERT_EQ(run("train -i " + dataset().string() + " -o " + a.string() + kQuickTrain), 0);
    ASSERT_EQ(run("train -i " + dataset().string() + " -o " + b.string() + kQuickTrain), 0);
    for(const char* sub : {"masks", "background", "illumination", "foreground"})
        EXPECT_TRUE(fs::exists(a / sub / "000004.png")) << sub;
    const auto m = read_json(a / "manifest.json");
    EXPECT_EQ(m["epoch_losses"].size(), 3u);
    EXPECT_EQ(m["sigma"].size(), 8u);
    EXPECT_TRUE(m.contains("t"));
    EXPECT_EQ(m["config"]["seed"], 3);
    EXPECT_EQ(slurp(a / "manifest.json").find(a.string()), std::string::npos);
    EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
    for(const auto& e : fs::directory_iterator(a / "masks"))
        EXPECT_EQ(slurp(e.path()), slurp(b / "masks" / e.path().filename()));
    EXPECT_TRUE(fs::exists(a / "checkpoint.json"));
    EXPECT_LE(m["epoch_losses"].back().get<double>(), m["epoch_losses"].front().get<double>());
    EXPECT_LE(m["final_loss"].get<double>(), m["initial_loss"].get<double>());
}

TEST(Cli, ConfigFileWithFlagPrecedence) {
    const fs::path cfg = work_dir() / "run.ini";
    std::ofstream(cfg) << "# quick run\n[train]\nepochs = 2\nseed = 9\nminibatch = 4\nangle = 1.0\n";
    const fs::path a = work_dir() / "cfg_a", b = work_dir() / "cfg_b";
    ASSERT_EQ(run("--config " + cfg.string() + " train -q -i " + dataset().string() + " -o " + a.string()), 0);
    ASSERT_EQ(run("--config " + cfg.string() + " train -q -i " + dataset().string() + " -o " + b.string() + " --epochs 1"), 0);
    const auto ma = read_json(a / "manifest.json"), mb = read_json(b / "manifest.json");
    EXPECT_EQ(ma["config"]["epochs"], 2);
    EXPECT_EQ(ma["config"]["seed"], 9);
    EXPECT_EQ(mb["config"]["epochs"], 1);
    EXPECT_EQ(mb["config"]["seed"], 9);
    EXPECT_EQ(run("--config " + (work_dir() / "absent.ini").string() + " train -q -i " + dataset().string() + " -o " + (work_dir() / "cfg_c").string()), 2);
}

TEST(Cli, OnlineModePretrainsOnFirstHalf) {
    const fs::path out = work_dir() / "online";
    ASSERT_EQ(run("train --mode online --stream 2 --online-iterations 5 -i " + dataset().string() + " -o " + out.string() + kQuickTrain), 0);
    const auto m = read_json(out / "manifest.json");
    EXPECT_EQ(m["pretrain"]["frames"], 4);
    EXPECT_EQ(m["online"]["streams"].size(), 2u);
    EXPECT_EQ(m["online"]["streams"][0]["first"], "000004");
    EXPECT_EQ(m["online"]["streams"][1]["last"], "000007");
    EXPECT_TRUE(fs::exists(out / "masks" / "000000.png"));
    EXPECT_TRUE(fs::exists(out / "masks" / "000007.png"));

    const fs::path again = work_dir() / "online_ckpt";
    ASSERT_EQ(run("train --mode online --stream 4 --online-iterations 5 --checkpoint " + (out / "checkpoint.json").string() + " -i " + dataset().string() + " -o " + again.string() + kQuickTrain), 0);
    const auto m2 = read_json(again / "manifest.json");
    EXPECT_TRUE(m2["pretrain"].is_null());
    EXPECT_EQ(m2["online"]["streams"].size(), 2u);
    EXPECT_EQ(read_json(again / "checkpoint.json")["net1"], read_json(out / "checkpoint.json")["net1"]);
}

TEST(Cli, DecomposeWithCheckpoint) {
    const fs::path trained = work_dir() / "dec_src";
    ASSERT_EQ(run("train -i " + dataset().string() + " -o " + trained.string() + kQuickTrain), 0);
    const fs::path out = work_dir() / "dec_out";
    ASSERT_EQ(run("decompose --online-iterations 3 --checkpoint " + (trained / "checkpoint.json").string() + " -i " + dataset().string() + " -o " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "foreground" / "000003.png"));
    EXPECT_EQ(run("decompose --checkpoint " + (work_dir() / "none.json").string() + " -i " + dataset().string() + " -o " + (work_dir() / "dec_bad").string()), 2);
    EXPECT_FALSE(fs::exists(work_dir() / "dec_bad"));
}

TEST(Cli, InvariantCommand) {
    const fs::path out = work_dir() / "inv";
    ASSERT_EQ(run("invariant --threads 2 -i " + dataset().string() + " -o " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "000002.png"));
    const auto model = read_json(out / "invariant.json");
    EXPECT_GE(model["theta"].get<double>(), 0.0);
}

TEST(Cli, EvalWritesScores) {
    const fs::path out = work_dir() / "eval";
    ASSERT_EQ(run("eval -p " + dataset().string() + "/groundtruth -g " + dataset().string() + " -o " + out.string()), 0);
    const auto summary = read_json(out / "summary.json");
    EXPECT_DOUBLE_EQ(summary["f_measure"].get<double>(), 1.0);
    const std::string csv = slurp(out / "scores.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "frame_id,tp,fp,fn,tn,precision,recall,f_measure");
    EXPECT_NE(csv.find("000003,64,0,0,4032,1,1,1"), std::string::npos);
}

TEST(Cli, EvalReportsMismatchedFrames) {
    const fs::path pred = work_dir() / "partial";
    fs::create_directories(pred);
    fs::copy_file(dataset() / "groundtruth" / "000001.png", pred / "000001.png", fs::copy_options::overwrite_existing);
    std::string log;
    EXPECT_EQ(run("eval -p " + pred.string() + " -g " + dataset().string() + " -o " + (work_dir() / "eval_bad").string(), &log), 2);
    EXPECT_NE(log.find("000002"), std::string::npos);
}

TEST(Cli, EvalMatchesHandComputedScores) {
    const fs::path pred = work_dir() / "hand_pred", gt = work_dir() / "hand_gt";
    fs::create_directories(pred);
    fs::create_directories(gt);
    // frame 1: tp 1, fp 1, fn 1 -> F 0.5; frame 2: tp 2, fn 2 -> P 1, R 0.5, F 2/3
    cv::Mat p1(1, 4, CV_8UC1), g1(1, 4, CV_8UC1), p2(1, 4, CV_8UC1), g2(1, 4, CV_8UC1);
    const unsigned char vp1[] = {255, 255, 0, 0}, vg1[] = {255, 0, 255, 0}, vp2[] = {255, 255, 0, 0}, vg2[] = {255, 255, 255, 255};
    for(int x = 0; x < 4; ++x) {
        p1.at<unsigned char>(0, x) = vp1[x];
        g1.at<unsigned char>(0, x) = vg1[x];
        p2.at<unsigned char>(0, x) = vp2[x];
        g2.at<unsigned char>(0, x) = vg2[x];
    }
    cv::imwrite((pred / "bin000001.png").string(), p1);
    cv::imwrite((pred / "bin000002.png").string(), p2);
    cv::imwrite((gt / "gt000001.png").string(), g1);
    cv::imwrite((gt / "gt000002.png").string(), g2);
    const fs::path out = work_dir() / "hand_eval";
    ASSERT_EQ(run("eval -p " + pred.string() + " -g " + gt.string() + " -o " + out.string()), 0);
    EXPECT_NEAR(read_json(out / "summary.json")["f_measure"].get<double>(), (0.5 + 2.0 / 3.0) / 2.0, 1e-12);
    const std::string csv = slurp(out / "scores.csv");
    EXPECT_NE(csv.find("bin000001,1,1,1,1,0.5,0.5,0.5"), std::string::npos);
}
