#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include "numod/sequence_io.hpp"

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("numod_io_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

} // namespace

TEST(SequenceIo, RoundTripsRgbInFilenameOrder) {
    const fs::path dir = fresh_dir("roundtrip");
    for(int i : {2, 0, 1}) {
        numod::Frame f(5, 4, 3);
        for(int y = 0; y < 4; ++y)
            for(int x = 0; x < 5; ++x) {
                f.at(x, y, 0) = (x * 40 + i) / 255.0;
                f.at(x, y, 1) = (y * 50) / 255.0;
                f.at(x, y, 2) = 200 / 255.0;
            }
        numod::save_image(f, dir / ("f" + std::to_string(i) + ".png"));
    }
    const numod::Sequence s = numod::load_sequence(dir);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s.frame_ids, (std::vector<std::string>{"f0", "f1", "f2"}));
    EXPECT_EQ(s.width(), 5);
    EXPECT_EQ(s.height(), 4);
    EXPECT_NEAR(s.frames[2].at(3, 1, 0), (120 + 2) / 255.0, 1e-12);
    EXPECT_NEAR(s.frames[2].at(3, 2, 1), 100 / 255.0, 1e-12);
    EXPECT_NEAR(s.frames[0].at(0, 0, 2), 200 / 255.0, 1e-12);
}

TEST(SequenceIo, SixteenBitNormalizesToUnitRange) {
    const fs::path dir = fresh_dir("sixteen");
    cv::Mat img(2, 2, CV_16UC3, cv::Scalar(65535, 0, 32768));
    cv::imwrite((dir / "a.png").string(), img);
    const numod::Sequence s = numod::load_sequence(dir);
    EXPECT_DOUBLE_EQ(s.frames[0].at(1, 1, 0), 32768.0 / 65535.0); // stored BGR
    EXPECT_DOUBLE_EQ(s.frames[0].at(1, 1, 2), 1.0);
}

TEST(SequenceIo, DownsamplesToMaxSide) {
    const fs::path dir = fresh_dir("down");
    cv::Mat img(30, 60, CV_8UC3, cv::Scalar(10, 20, 30));
    cv::imwrite((dir / "a.png").string(), img);
    const numod::Sequence s = numod::load_sequence(dir, "*.png", 20);
    EXPECT_EQ(s.width(), 20);
    EXPECT_EQ(s.height(), 10);
}

TEST(SequenceIo, RejectsInconsistentDimensions) {
    const fs::path dir = fresh_dir("mixed");
    cv::imwrite((dir / "a.png").string(), cv::Mat(4, 4, CV_8UC3, cv::Scalar(1, 2, 3)));
    cv::imwrite((dir / "b.png").string(), cv::Mat(5, 4, CV_8UC3, cv::Scalar(1, 2, 3)));
    try {
        numod::load_sequence(dir);
        FAIL() << "expected an error";
    } catch(const numod::Error& e) {
        EXPECT_NE(std::string(e.what()).find("b.png"), std::string::npos);
    }
}

TEST(SequenceIo, RejectsUndecodableAndMissing) {
    const fs::path dir = fresh_dir("broken");
    std::ofstream(dir / "x.png") << "not an image";
    EXPECT_THROW(numod::load_sequence(dir), numod::Error);
    EXPECT_THROW(numod::load_sequence(dir / "nope"), numod::Error);
    EXPECT_THROW(numod::load_sequence(dir, "*.jpg"), numod::Error);
}

TEST(SequenceIo, MaskLabels) {
    const fs::path dir = fresh_dir("masks");
    cv::Mat img(1, 5, CV_8UC1);
    const unsigned char vals[5] = {0, 50, 85, 170, 255};
    for(int x = 0; x < 5; ++x)
        img.at<unsigned char>(0, x) = vals[x];
    cv::imwrite((dir / "gt1.png").string(), img);
    const numod::MaskSequence plain = numod::load_masks(dir);
    EXPECT_EQ(plain.masks[0].data, (std::vector<unsigned char>{0, 0, 0, 0, 1}));
    EXPECT_TRUE(plain.roi.empty());

    numod::MaskLoadOptions opt;
    opt.exclude_unknown = true;
    const numod::MaskSequence ex = numod::load_masks(dir, "*.png", opt);
    EXPECT_EQ(ex.roi[0].data, (std::vector<unsigned char>{1, 1, 0, 0, 1}));
}

TEST(SequenceIo, SignedEncoding) {
    EXPECT_EQ(numod::to_byte(0.0, true), 128);
    EXPECT_EQ(numod::to_byte(-1.0, true), 0);
    EXPECT_EQ(numod::to_byte(1.0, true), 255);
    EXPECT_EQ(numod::to_byte(2.0, true), 255);
    EXPECT_EQ(numod::to_byte(0.5, false), 128);
    EXPECT_EQ(numod::to_byte(-0.2, false), 0);
}

TEST(SequenceIo, MaskWriteRead) {
    const fs::path dir = fresh_dir("maskrw");
    numod::Mask m(3, 2);
    m(1, 0) = 1;
    m(2, 1) = 1;
    numod::save_mask(m, dir / "m.png");
    const numod::MaskSequence back = numod::load_masks(dir);
    EXPECT_EQ(back.masks[0].data, m.data);
}
