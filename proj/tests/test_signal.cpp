// Copyright 2026 The megtl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "megtl/error.hpp"
#include "megtl/signal.hpp"
#include "test_util.hpp"

namespace megtl {
namespace {

Recording random_recording(std::size_t channels, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> normal;
  std::vector<float> x(channels * samples);
  for (auto& v : x) v = normal(gen);
  return Recording("s01", TaskId::Playback, 1000.0, channels, std::move(x));
}

TEST(TaskIdTest, NamesRoundTrip) {
  for (TaskId t : {TaskId::Listen, TaskId::Playback, TaskId::Production, TaskId::Pretrain}) {
    EXPECT_EQ(parse_task(task_name(t)), t);
  }
  EXPECT_FALSE(parse_task("Listen").has_value());
  EXPECT_EQ(task_short_name(TaskId::Playback), "play.");
}

TEST(RecordingTest, ChannelMajorAccess) {
  Recording r("a", TaskId::Listen, 250.0, 2, {1, 2, 3, 10, 20, 30});
  EXPECT_EQ(r.n_samples(), 3u);
  EXPECT_EQ(r.at(1, 2), 30.0f);
  EXPECT_EQ(r.channel(0)[1], 2.0f);
}

TEST(RecordingTest, RejectsBrokenInvariants) {
  EXPECT_THROW(Recording("a", TaskId::Listen, 0.0, 1, {1.0f}), InvalidArgument);
  EXPECT_THROW(Recording("a", TaskId::Listen, 250.0, 0, {}), InvalidArgument);
  EXPECT_THROW(Recording("a", TaskId::Listen, 250.0, 2, {1, 2, 3}), InvalidArgument);
  EXPECT_THROW(Recording("a", TaskId::Listen, 250.0, 1, {std::nanf("")}), FormatError);
}

TEST(VadTrackTest, MaskAndFraction) {
  VadTrack v({{1, 3}, {5, 6}});
  EXPECT_EQ(v.speech_samples(), 3u);
  const std::vector<std::uint8_t> expected = {0, 1, 1, 0, 0, 1, 0, 0};
  EXPECT_EQ(v.mask(8), expected);
  EXPECT_DOUBLE_EQ(speech_fraction(v, 8), 3.0 / 8.0);
  EXPECT_THROW(v.mask(5), InvalidArgument);
}

TEST(VadTrackTest, RejectsOverlapAndEmptyIntervals) {
  EXPECT_THROW(VadTrack({{3, 3}}), InvalidArgument);
  EXPECT_THROW(VadTrack({{0, 4}, {3, 6}}), InvalidArgument);
  EXPECT_THROW(VadTrack({{5, 6}, {0, 1}}), InvalidArgument);
  EXPECT_NO_THROW(VadTrack({{0, 4}, {4, 6}}));
}

TEST(FormatsTest, RecordingRoundTripIsBitExact) {
  testutil::TempDir dir;
  const auto r = random_recording(5, 777, 3);
  write_recording(r, dir / "a.megr");
  const auto back = load_recording(dir / "a.megr", "s01", TaskId::Playback);
  EXPECT_EQ(back.n_channels(), r.n_channels());
  EXPECT_EQ(back.sample_rate_hz(), r.sample_rate_hz());
  ASSERT_EQ(back.samples().size(), r.samples().size());
  EXPECT_TRUE(std::equal(r.samples().begin(), r.samples().end(), back.samples().begin(),
                         [](float a, float b) { return std::bit_cast<std::uint32_t>(a) ==
                                                       std::bit_cast<std::uint32_t>(b); }));
  write_recording(back, dir / "b.megr");
  EXPECT_EQ(testutil::slurp(dir / "a.megr"), testutil::slurp(dir / "b.megr"));
}

TEST(FormatsTest, RecordingHeaderLayout) {
  testutil::TempDir dir;
  write_recording(Recording("x", TaskId::Listen, 250.0, 3, std::vector<float>(3 * 4, 1.0f)),
                  dir / "a.megr");
  const auto bytes = testutil::slurp(dir / "a.megr");
  EXPECT_EQ(bytes.substr(0, 4), "MEGR");
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 8 + 8 + 3 * 4 * 4);
}

TEST(FormatsTest, VadRoundTrip) {
  testutil::TempDir dir;
  const VadTrack v({{0, 10}, {12, 40}, {100, 101}});
  write_vad(v, dir / "a.vad");
  EXPECT_EQ(load_vad(dir / "a.vad"), v);
  write_vad(VadTrack{}, dir / "e.vad");
  EXPECT_TRUE(load_vad(dir / "e.vad").empty());
}

FormatError::Kind kind_of(const std::filesystem::path& p) {
  try {
    if (p.extension() == ".vad") {
      load_vad(p);
    } else {
      load_recording(p);
    }
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no FormatError for " << p;
  return FormatError::Kind::Malformed;
}

TEST(FormatsTest, CorruptFilesAreClassified) {
  testutil::TempDir dir;
  write_recording(random_recording(2, 50, 1), dir / "good.megr");
  const auto good = testutil::slurp(dir / "good.megr");

  testutil::spit(dir / "magic.megr", "XEGR" + good.substr(4));
  EXPECT_EQ(kind_of(dir / "magic.megr"), FormatError::Kind::BadMagic);

  std::string version = good;
  version[4] = 9;
  testutil::spit(dir / "version.megr", version);
  EXPECT_EQ(kind_of(dir / "version.megr"), FormatError::Kind::BadVersion);

  testutil::spit(dir / "short.megr", good.substr(0, good.size() - 3));
  EXPECT_EQ(kind_of(dir / "short.megr"), FormatError::Kind::Truncated);

  testutil::spit(dir / "tail.megr", good + "x");
  EXPECT_EQ(kind_of(dir / "tail.megr"), FormatError::Kind::Malformed);

  std::string nan = good;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + 28, &q, 4);
  testutil::spit(dir / "nan.megr", nan);
  EXPECT_EQ(kind_of(dir / "nan.megr"), FormatError::Kind::NonFinite);

  write_vad(VadTrack({{5, 9}, {20, 30}}), dir / "good.vad");
  const auto vgood = testutil::slurp(dir / "good.vad");
  testutil::spit(dir / "short.vad", vgood.substr(0, vgood.size() - 1));
  EXPECT_EQ(kind_of(dir / "short.vad"), FormatError::Kind::Truncated);
  std::string overlap = vgood;
  overlap[vgood.size() - 16] = 2;  // second interval now starts inside the first
  testutil::spit(dir / "overlap.vad", overlap);
  EXPECT_EQ(kind_of(dir / "overlap.vad"), FormatError::Kind::Malformed);
}

TEST(FormatsTest, MissingFileIsIoError) {
  EXPECT_THROW(load_recording("/nonexistent/x.megr"), IoError);
}

TEST(SplitTest, SizesFollowFloorRule) {
  for (std::size_t n : {3u, 7u, 10u, 99u, 600u}) {
    const auto s = split_frames(n, 11);
    const auto train = static_cast<std::size_t>(std::floor(0.70 * static_cast<double>(n)));
    const auto val = static_cast<std::size_t>(std::floor(0.15 * static_cast<double>(n)));
    EXPECT_EQ(s.train_idx.size() + s.val_idx.size() + s.test_idx.size(), n);
    EXPECT_GE(s.val_idx.size(), 1u);
    EXPECT_GE(s.test_idx.size(), 1u);
    if (val >= 1 && n - train - val >= 1) {
      EXPECT_EQ(s.train_idx.size(), train) << n;
      EXPECT_EQ(s.val_idx.size(), val) << n;
    }
  }
  EXPECT_THROW(split_frames(2, 0), InvalidArgument);
}

TEST(SplitTest, PartitionIsDisjointAndComplete) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = split_frames(137, seed);
    std::set<std::size_t> all;
    for (const auto* v : {&s.train_idx, &s.val_idx, &s.test_idx}) all.insert(v->begin(), v->end());
    EXPECT_EQ(all.size(), 137u);
    EXPECT_EQ(*all.rbegin(), 136u);
  }
}

TEST(SplitTest, SeedDeterminesAssignment) {
  const auto a = split_frames(200, 5), b = split_frames(200, 5), c = split_frames(200, 6);
  EXPECT_EQ(a.test_idx, b.test_idx);
  EXPECT_NE(a.test_idx, c.test_idx);
  EXPECT_NE(split_seed(1, "sub01", TaskId::Listen), split_seed(1, "sub01", TaskId::Playback));
  EXPECT_NE(split_seed(1, "sub01", TaskId::Listen), split_seed(1, "sub02", TaskId::Listen));
  EXPECT_EQ(split_seed(1, "sub01", TaskId::Listen), split_seed(1, "sub01", TaskId::Listen));
}

TEST(SplitTest, EveryWindowLandsInTestAtTheExpectedRate) {
  // Across seeds each index should be held out about 15% of the time.
  std::vector<int> hits(50, 0);
  const int trials = 2000;
  for (int s = 0; s < trials; ++s) {
    for (auto i : split_frames(50, static_cast<std::uint64_t>(s)).test_idx) ++hits[i];
  }
  const double expected = trials * 8.0 / 50.0;  // test = 50 - 35 - 7
  for (int h : hits) EXPECT_NEAR(h, expected, 6 * std::sqrt(expected));
}

}  // namespace
}  // namespace megtl
