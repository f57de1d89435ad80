#include <gtest/gtest.h>

#include "numod/synth.hpp"

TEST(Synth, StandardFixtureShape) {
    const numod::SynthOutput s = numod::generate(numod::standard_fixture());
    ASSERT_EQ(s.sequence.size(), 100u);
    EXPECT_EQ(s.sequence.width(), 64);
    EXPECT_EQ(s.sequence.height(), 64);
    EXPECT_EQ(s.sequence.frame_ids.front(), "000000");
    EXPECT_EQ(s.masks.frame_ids, s.sequence.frame_ids);
    for(const auto& m : s.masks.masks)
        EXPECT_EQ(m.count(), 64u);
    for(const auto& f : s.sequence.frames) {
        EXPECT_GE(f.data.minCoeff(), 0.0);
        EXPECT_LE(f.data.maxCoeff(), 1.0);
    }
}

TEST(Synth, Deterministic) {
    const numod::SynthOutput a = numod::generate(numod::standard_fixture(3));
    const numod::SynthOutput b = numod::generate(numod::standard_fixture(3));
    const numod::SynthOutput c = numod::generate(numod::standard_fixture(4));
    EXPECT_EQ(a.sequence.frames[50].data, b.sequence.frames[50].data);
    EXPECT_NE(a.sequence.frames[50].data, c.sequence.frames[50].data);
}

TEST(Synth, GainScalesWholeFrame) {
    numod::SynthConfig cfg;
    cfg.width = 8;
    cfg.height = 8;
    cfg.n_frames = 3;
    cfg.background = numod::BackgroundKind::flat;
    numod::SynthObject o;
    o.width = o.height = 2;
    o.color = {0.5, 0.5, 0.5};
    cfg.objects.push_back(o);
    numod::IlluminationEvent e;
    e.start = 1;
    e.end = 2;
    e.magnitude = 1.5;
    e.magnitude_end = 1.5;
    cfg.events.push_back(e);
    const numod::SynthOutput s = numod::generate(cfg);
    EXPECT_DOUBLE_EQ(s.sequence.frames[1].at(5, 5, 0), 0.35 * 1.5);
    EXPECT_DOUBLE_EQ(s.sequence.frames[1].at(0, 0, 0), 0.75);
    EXPECT_DOUBLE_EQ(s.sequence.frames[0].at(0, 0, 0), 0.5);
    EXPECT_EQ(s.events.size(), 2u);
    EXPECT_EQ(s.events[0].frame, 1);
}

TEST(Synth, ShadowDarkensCentreOnly) {
    numod::SynthConfig cfg;
    cfg.width = 32;
    cfg.height = 32;
    cfg.n_frames = 1;
    cfg.background = numod::BackgroundKind::flat;
    numod::IlluminationEvent e;
    e.kind = numod::EventKind::soft_shadow_ellipse;
    e.start = 0;
    e.end = 0;
    e.cx0 = e.cx1 = 16;
    e.cy0 = e.cy1 = 16;
    e.rx = 6;
    e.ry = 4;
    e.softness = 0.3;
    cfg.events.push_back(e);
    const numod::Frame f = numod::generate(cfg).sequence.frames[0];
    EXPECT_NEAR(f.at(16, 16, 1), 0.4 * 0.6, 1e-12);
    EXPECT_DOUBLE_EQ(f.at(0, 0, 1), 0.4);
    EXPECT_GT(f.at(22, 16, 1), 0.4 * 0.6);
    EXPECT_LT(f.at(22, 16, 1), 0.4);
}

TEST(Synth, Validation) {
    numod::SynthConfig cfg;
    cfg.n_frames = 0;
    EXPECT_THROW(numod::generate(cfg), numod::Error);
    cfg = {};
    numod::SynthObject o;
    o.width = 100;
    cfg.objects.push_back(o);
    EXPECT_THROW(numod::generate(cfg), numod::Error);
}
