#include <gtest/gtest.h>

#include "support.hpp"

#include <sstream>

using namespace lagseq;
using lagseq::testing::record;

namespace {

std::vector<SubjectRecord> parse_subjects(const std::string& text, OutcomeKind kind = OutcomeKind::continuous,
                                          double T_F = 90) {
  std::istringstream in(text);
  return read_subjects(in, "subjects.csv", kind, T_F);
}

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LoadTrial, ThreeRowsNoLongitudinal) {
  const auto recs = parse_subjects(
      "id,entry_time,arm,T,Y,x1\n"
      "s1,0,0,90,1.5,0.2\n"
      "s2,10.5,1,45,2.5,-1\n"
      "s3,20,1,90,0.5,3\n");
  ASSERT_EQ(recs.size(), 3u);
  for (const auto& r : recs) EXPECT_TRUE(r.path.empty());
  EXPECT_EQ(recs[1].id, "s2");
  EXPECT_DOUBLE_EQ(recs[1].entry, 10.5);
  EXPECT_EQ(recs[1].arm, 1);
  EXPECT_DOUBLE_EQ(recs[1].lag, 45);
  EXPECT_DOUBLE_EQ(recs[1].y.value(), 2.5);
  EXPECT_DOUBLE_EQ(recs[2].x[0], 3);
}

TEST(LoadTrial, LagBeyondFollowUpWindow) {
  const auto msg = error_of([] { parse_subjects("id,entry_time,arm,T,Y\ns1,0,0,100,1\n"); });
  EXPECT_NE(msg.find("lag exceeds T_F"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
}

TEST(LoadTrial, LongitudinalRowAfterLagRejected) {
  auto recs = parse_subjects("id,entry_time,arm,T,Y\ns1,0,0,40,1\n");
  std::istringstream in("id,u,l1\ns1,50,1\n");
  const auto msg = error_of([&] { read_longitudinal(in, "long.csv", recs); });
  EXPECT_NE(msg.find("rejected row"), std::string::npos) << msg;
}

TEST(LoadTrial, SchemaErrorsNameTheRow) {
  EXPECT_NE(error_of([] { parse_subjects("id,entry_time,arm,T,Y\ns1,0,0,40,1\ns1,1,1,40,1\n"); }).find("duplicate id"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_subjects("id,entry_time,arm,T,Y\ns1,0,2,40,1\n"); }).find("line 2"), std::string::npos);
  EXPECT_NE(error_of([] { parse_subjects("id,entry,arm,T,Y\n"); }).find("header"), std::string::npos);
  EXPECT_NE(error_of([] { parse_subjects("id,entry_time,arm,T,Y\ns1,0,0,40,\n"); }).find("Y is required"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_subjects("id,entry_time,arm,T,Y\ns1,0,0,40,abc\n"); }).find("line 2"),
            std::string::npos);
  EXPECT_FALSE(error_of([] { parse_subjects("id,entry_time,arm,T,Y\ns1,0,0,40,7\n", OutcomeKind::binary); }).empty());
  EXPECT_FALSE(error_of([] { parse_subjects("id,entry_time,arm,T,Y\ns1,0,0,40,2.5\n", OutcomeKind::ordinal); }).empty());
}

TEST(LoadTrial, UnknownLongitudinalId) {
  auto recs = parse_subjects("id,entry_time,arm,T,Y\ns1,0,0,40,1\n");
  std::istringstream in("id,u,l1\ns9,5,1\n");
  EXPECT_NE(error_of([&] { read_longitudinal(in, "long.csv", recs); }).find("unknown subject id"), std::string::npos);
}

TEST(LoadTrial, LongitudinalRowsSortedPerSubject) {
  auto recs = parse_subjects("id,entry_time,arm,T,Y\ns1,0,0,40,1\ns2,0,1,40,1\n");
  std::istringstream in("id,u,l1,l2\ns1,20,2,20\ns2,1,5,5\ns1,3,1,10\n");
  read_longitudinal(in, "long.csv", recs);
  ASSERT_EQ(recs[0].path.size(), 2u);
  EXPECT_DOUBLE_EQ(recs[0].path.time(0), 3);
  EXPECT_DOUBLE_EQ(recs[0].path.row(1)[1], 20);
  EXPECT_EQ(recs[1].path.size(), 1u);
}

TEST(Design, ParsesAndValidates) {
  const auto j = nlohmann::json::parse(R"({"n_max": 602, "T_F": 90, "E_max": 240, "alpha": 0.025,
    "sidedness": 1, "spending": "obf", "analysis_times": [150, 195, 240, 285, 330],
    "model": {"kind": "proportional_odds", "levels": 6}, "basis": {"f": ["x1"], "h": ["l1", "l2", "x1"]}})");
  const auto d = parse_design(j);
  EXPECT_EQ(d.n_max, 602u);
  EXPECT_EQ(d.model.levels, 6);
  EXPECT_EQ(d.sidedness, Sidedness::one);
  EXPECT_EQ(d.spending, SpendingKind::obrien_fleming);
  EXPECT_TRUE(d.basis_given);
  EXPECT_EQ(d.basis(1, 2).L(), 3u);
  EXPECT_THROW(d.basis(1, 1), ValidationError);
  const auto back = parse_design(design_to_json(d));
  EXPECT_EQ(back.analysis_times, d.analysis_times);

  auto bad = j;
  bad["analysis_times"] = {60, 195, 330};
  EXPECT_NE(error_of([&] { parse_design(bad); }).find("T_F"), std::string::npos);
  bad = j;
  bad["analysis_times"] = {150, 195, 300};
  EXPECT_NE(error_of([&] { parse_design(bad); }).find("E_max + T_F"), std::string::npos);
  bad = j;
  bad.erase("alpha");
  EXPECT_NE(error_of([&] { parse_design(bad); }).find("alpha"), std::string::npos);
  bad = j;
  bad["analysis_times"] = {150, 150, 330};
  EXPECT_FALSE(error_of([&] { parse_design(bad); }).empty());
}

TEST(Snapshot, CensoredSubjectIsMasked) {
  const std::vector<SubjectRecord> recs = {record("s", 10, 0, 90, Outcome::continuous(3.0))};
  const auto s = snapshot_at(recs, 50, 90);
  ASSERT_EQ(s.size(), 1u);
  const auto& o = s.subjects[0];
  EXPECT_DOUBLE_EQ(o.C(), 40);
  EXPECT_DOUBLE_EQ(o.U(), 40);
  EXPECT_FALSE(o.delta());
  EXPECT_FALSE(o.has_outcome());
  EXPECT_THROW((void)o.outcome(), std::logic_error);
}

TEST(Snapshot, AscertainedSubjectIsVisible) {
  const std::vector<SubjectRecord> recs = {record("s", 10, 1, 30, Outcome::binary(1))};
  const auto o = snapshot_at(recs, 50, 90).subjects[0];
  EXPECT_DOUBLE_EQ(o.C(), 40);
  EXPECT_DOUBLE_EQ(o.U(), 30);
  EXPECT_TRUE(o.delta());
  EXPECT_DOUBLE_EQ(o.outcome().value(), 1.0);
}

TEST(Snapshot, EnrollmentCountMatchesEntryTimes) {
  Rng rng(11, 0, 0);
  const auto recs = gen_scenario1(rng, Hypothesis::null);
  const auto s = snapshot_at(recs, 150, 90);
  std::size_t n = 0, nA = 0;
  for (const auto& r : recs) {
    n += r.entry <= 150;
    nA += r.entry <= 60;
  }
  EXPECT_EQ(s.n_t, n);
  EXPECT_EQ(s.n_A_t, nA);
  EXPECT_NEAR(static_cast<double>(n), 602.0 * 150 / 240, 4 * std::sqrt(602 * 0.625 * 0.375));
}

TEST(Snapshot, EntryAtAnalysisTimeCounts) {
  const std::vector<SubjectRecord> recs = {record("s", 50, 0, 90, Outcome::continuous(0))};
  EXPECT_EQ(snapshot_at(recs, 50, 90).size(), 1u);
}

TEST(Snapshot, FinalAnalysisSeesEverything) {
  Rng rng(3, 0, 0);
  const auto recs = gen_scenario1(rng, Hypothesis::alternative);
  const auto s = snapshot_at(recs, 330, 90);
  EXPECT_EQ(s.n_t, 602u);
  EXPECT_EQ(s.n_A_t, 602u);
  for (const auto& o : s.subjects) EXPECT_TRUE(o.delta());
}

TEST(Snapshot, MonotoneInTime) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed, 0, 5);
    const auto recs = gen_scenario1(rng, Hypothesis::null);
    const double s = rng.uniform(90, 330), t = s + rng.uniform(0, 100);
    const auto a = snapshot_at(recs, s, 90), b = snapshot_at(recs, t, 90);
    ASSERT_LE(a.size(), b.size());
    for (std::size_t i = 0, k = 0; i < a.size(); ++i) {
      while (b.subjects[k].id() != a.subjects[i].id()) ++k;
      if (a.subjects[i].delta()) EXPECT_TRUE(b.subjects[k].delta());
      EXPECT_LE(a.subjects[i].U(), b.subjects[k].U());
    }
  }
}

TEST(Snapshot, PathTruncatedAtU) {
  auto r = record("s", 0, 0, 80, Outcome::continuous(1));
  r.path = CovariatePath(1);
  for (double u : {0.0, 10.0, 40.0, 70.0}) r.path.append(u, std::span<const double>(&u, 1));
  const auto o = snapshot_at({r}, 30, 90).subjects[0];
  EXPECT_EQ(o.path().size(), 2u);
  const std::vector<double> fallback = {-1};
  EXPECT_DOUBLE_EQ(o.path().at(35, fallback)[0], 10);
  auto r2 = r;
  r2.path = CovariatePath(1);
  const double v = 5;
  r2.path.append(20, std::span<const double>(&v, 1));
  EXPECT_DOUBLE_EQ(r2.path.at(19.9, fallback)[0], -1);
  EXPECT_DOUBLE_EQ(r2.path.at(20, fallback)[0], 5);
}

TEST(Io, SubjectRoundTripIsExact) {
  Rng rng(5, 0, 0);
  const auto recs = gen_scenario1(rng, Hypothesis::alternative);
  std::stringstream s, l;
  write_subjects(s, recs);
  write_longitudinal(l, recs);
  auto back = read_subjects(s, "s", OutcomeKind::ordinal, 90);
  read_longitudinal(l, "l", back);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].entry, recs[i].entry);
    EXPECT_EQ(back[i].lag, recs[i].lag);
    EXPECT_EQ(back[i].x, recs[i].x);
    EXPECT_EQ(back[i].y.value(), recs[i].y.value());
    ASSERT_EQ(back[i].path.size(), recs[i].path.size());
    for (std::size_t k = 0; k < recs[i].path.size(); ++k) EXPECT_EQ(back[i].path.time(k), recs[i].path.time(k));
  }
}

TEST(Io, SnapshotExportBlanksUnascertained) {
  const std::vector<SubjectRecord> recs = {record("a", 10, 0, 90, Outcome::continuous(3.5), {1}),
                                           record("b", 10, 1, 20, Outcome::continuous(2.5), {2})};
  std::stringstream out;
  write_snapshot(out, snapshot_at(recs, 50, 90));
  std::string header, a, b;
  std::getline(out, header);
  std::getline(out, a);
  std::getline(out, b);
  EXPECT_EQ(header, "id,entry_time,arm,T,Y,x1,C,U,delta");
  EXPECT_EQ(a, "a,10,0,,,1,40,40,0");
  EXPECT_EQ(b, "b,10,1,20,2.5,2,40,20,1");
}
