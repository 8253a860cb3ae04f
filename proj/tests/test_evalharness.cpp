#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/fixture.hpp"
#include "vdna/evalharness.hpp"

using namespace vdna;

namespace {

const std::string kData = VDNA_DATA_DIR "/crossgen/";

RankedList ranking(const std::vector<std::string>& ids) {
  RankedList r;
  for (std::size_t i = 0; i < ids.size(); ++i) r.push_back({ids[i], static_cast<double>(i)});
  return r;
}

// Area under the step-free precision/recall polyline, computed directly from
// the definition over every prefix length.
double brute_force_auc(std::size_t negatives_first, std::size_t positives) {
  double auc = 0.0, prev_r = 0.0, prev_p = negatives_first == 0 ? 1.0 : 0.0;
  for (std::size_t k = 1; k <= negatives_first + positives; ++k) {
    const double tp = k > negatives_first ? static_cast<double>(k - negatives_first) : 0.0;
    const double p = tp / static_cast<double>(k);
    const double r = tp / static_cast<double>(positives);
    auc += (r - prev_r) * (p + prev_p) / 2.0;
    prev_r = r;
    prev_p = p;
  }
  return auc;
}

}  // namespace

TEST(Ranking, ReferenceCopyRanksFirst) {
  const auto h = fixture::make_header({4});
  fixture::RecordGenerator ref_gen(h, {16}, 1), far_gen(h, {16}, 2, 1.0);
  const auto recs = ref_gen.take(6);
  const auto cal = fixture::calibrate(h, recs);
  const FitOptions opt{Kind::kHist, 50, DegeneratePolicy::kConstantZero};
  const auto ref = fixture::fit_records(recs, cal, opt);
  const auto far = fixture::fit_records(far_gen.take(3), cal, opt);
  const auto near = fixture::fit_records({recs[0]}, cal, opt);
  const std::vector<RankItem> items{{"far", &far}, {"copy", &ref}, {"near", &near}};
  const auto w = WeightVector::uniform(4);
  const auto r = rank_against_reference(ref, items, w, 2);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0], (RankedEntry{"copy", 0.0}));
  EXPECT_EQ(r[1].id, "near");
  EXPECT_EQ(r, rank_against_reference(ref, items, w, 1));
  EXPECT_EQ(rank_against_reference(ref, {{"only", &far}}, w).size(), 1u);
}

TEST(Ranking, CsvRoundTrip) {
  fixture::TempDir dir;
  const RankedList r{{"a", 0.0}, {"b", 0.125}, {"c", 3.5}};
  write_ranked_csv(dir.file("r.csv"), r);
  EXPECT_EQ(read_ranked_csv(dir.file("r.csv")), r);
}

TEST(PrCurve, AllPositivesFirst) {
  const auto c = pr_curve(ranking({"p1", "p2", "n1", "n2"}), {"p1", "p2"});
  EXPECT_DOUBLE_EQ(c.auc, 1.0);
  EXPECT_EQ(c.precision, (std::vector<double>{1.0, 1.0, 2.0 / 3.0, 0.5}));
  EXPECT_DOUBLE_EQ(pr_curve(ranking({"a", "b"}), {"a", "b"}).auc, 1.0);
}

TEST(PrCurve, InvertedRankingMatchesBruteForce) {
  for (auto [neg, pos] : {std::pair<std::size_t, std::size_t>{2000, 2000}, {8000, 2000}, {3, 5}}) {
    std::vector<std::string> ids;
    std::unordered_set<std::string> positives;
    for (std::size_t i = 0; i < neg; ++i) ids.push_back("n" + std::to_string(i));
    for (std::size_t i = 0; i < pos; ++i) {
      ids.push_back("p" + std::to_string(i));
      positives.insert(ids.back());
    }
    EXPECT_NEAR(pr_curve(ranking(ids), positives).auc, brute_force_auc(neg, pos), 1e-12);
  }
  // With equal counts the area tends to 1 - ln 2.
  std::vector<std::string> ids;
  std::unordered_set<std::string> positives;
  for (int i = 0; i < 2000; ++i) ids.push_back("n" + std::to_string(i));
  for (int i = 0; i < 2000; ++i) {
    ids.push_back("p" + std::to_string(i));
    positives.insert(ids.back());
  }
  EXPECT_NEAR(pr_curve(ranking(ids), positives).auc, 1.0 - std::log(2.0), 1e-3);
}

TEST(PrCurve, RandomRankingApproachesPositiveRate) {
  std::vector<std::string> ids;
  std::unordered_set<std::string> positives;
  for (int i = 0; i < 10000; ++i) {
    ids.push_back("i" + std::to_string(i));
    if (i < 2000) positives.insert(ids.back());
  }
  std::mt19937_64 rng(77);
  double total = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::shuffle(ids.begin(), ids.end(), rng);
    total += pr_curve(ranking(ids), positives).auc;
  }
  EXPECT_NEAR(total / 100.0, 0.2, 0.02);
}

TEST(PrCurve, Errors) {
  EXPECT_THROW(pr_curve(ranking({"a"}), {}), ArgumentError);
  EXPECT_THROW(pr_curve(ranking({"a"}), {"zzz"}), ArgumentError);
}

TEST(CrossGen, PerfectPredictionIsZero) {
  const auto t = read_crossgen_csv(kData + "mseg_miou.csv", kData + "mseg_miou.csv");
  // Higher mIoU means "closer", so negate it to use as a distance.
  auto perfect = t;
  for (auto& row : perfect.predicted) {
    for (auto& x : row) x = -x;
  }
  EXPECT_EQ(crossgen_discrepancy(perfect), 0.0);
}

TEST(CrossGen, ReferenceOrderings) {
  const std::vector<std::pair<std::string, double>> cases{
      {"mugs_dna_emd", 0.76}, {"mugs_fd", 1.66},         {"mugs_dna_fd", 1.79},
      {"hrnet_all_dna_emd", 9.40}, {"hrnet_val_dna_emd", 6.85}};
  for (const auto& [name, expected] : cases) {
    const auto t = read_crossgen_csv(kData + "mseg_miou.csv", kData + "rank_" + name + ".csv");
    EXPECT_NEAR(crossgen_discrepancy(t), expected, 0.005) << name;
  }
}

TEST(CrossGen, PrintedDistancesGiveSameResultWhereUntied) {
  for (const std::string name : {"mugs_dna_emd", "mugs_fd", "mugs_dna_fd", "hrnet_val_dna_emd"}) {
    const auto by_rank = read_crossgen_csv(kData + "mseg_miou.csv", kData + "rank_" + name + ".csv");
    const auto by_dist = read_crossgen_csv(kData + "mseg_miou.csv", kData + "dist_" + name + ".csv");
    EXPECT_NEAR(crossgen_discrepancy(by_dist), crossgen_discrepancy(by_rank), 1e-12) << name;
  }
}

TEST(CrossGen, IncompleteMatrixIsRejected) {
  fixture::TempDir dir;
  std::ofstream(dir.file("short.csv")) << "validation,A,B\nA,1,2\nB,3\n";
  EXPECT_THROW(read_crossgen_csv(dir.file("short.csv"), dir.file("short.csv")), FormatError);
  std::ofstream(dir.file("m.csv")) << "validation,A,B\nA,1,2\nB,3,4\n";
  std::ofstream(dir.file("p.csv")) << "validation,A,C\nA,1,2\nB,3,4\n";
  EXPECT_THROW(read_crossgen_csv(dir.file("m.csv"), dir.file("p.csv")), ArgumentError);
}

TEST(CrossGen, RandomBaselineIsDeterministic) {
  const auto t = read_crossgen_csv(kData + "mseg_miou.csv", kData + "mseg_miou.csv");
  const auto a = random_ordering_baseline(t, 50, 123);
  const auto b = random_ordering_baseline(t, 50, 123);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_NE(random_ordering_baseline(t, 50, 124).samples, a.samples);
  EXPECT_THROW(random_ordering_baseline(t, 1, 0), ArgumentError);
}

TEST(CrossGen, GroundTruthOrderingScoresZero) {
  const auto t = read_crossgen_csv(kData + "mseg_miou.csv", kData + "mseg_miou.csv");
  std::vector<std::vector<std::size_t>> gt;
  for (std::size_t v = 0; v < t.validation.size(); ++v) gt.push_back(ground_truth_order(t, v));
  EXPECT_EQ(discrepancy_for_orderings(t, gt), 0.0);
}
