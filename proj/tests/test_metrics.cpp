#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>

#include "ddn/metrics.hpp"

using namespace ddn;

namespace {
// cm fixture: truth rows {3,1},{2,4}
ConfusionMatrix fixture() {
  ConfusionMatrix cm(2);
  LabelMap truth(1, 10), pred(1, 10);
  truth.values = {0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  pred.values = {0, 0, 0, 1, 0, 0, 1, 1, 1, 1};
  cm.accumulate(pred, truth);
  return cm;
}
}  // namespace

TEST_CASE("confusion matrix: counts, IoU, accuracy") {
  ConfusionMatrix cm = fixture();
  CHECK(cm.at(0, 0) == 3);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 2);
  CHECK(cm.at(1, 1) == 4);
  CHECK(cm.total() == 10);

  // IoU_0 = 3/(3+2+1) = 0.5, IoU_1 = 4/(4+1+2) = 4/7
  auto iou = cm.iou_per_class();
  CHECK(iou[0] == doctest::Approx(0.5));
  CHECK(iou[1] == doctest::Approx(4.0 / 7.0));
  CHECK(cm.mean_iou() == doctest::Approx((0.5 + 4.0 / 7.0) / 2.0));
  CHECK(cm.global_accuracy() == doctest::Approx(0.7));
}

TEST_CASE("confusion matrix: void truth pixels are skipped") {
  ConfusionMatrix cm(2);
  LabelMap truth(1, 4), pred(1, 4);
  truth.values = {0, -1, 1, -1};
  pred.values = {0, 0, 1, 1};
  cm.accumulate(pred, truth);
  CHECK(cm.total() == 2);
  CHECK(cm.global_accuracy() == doctest::Approx(1.0));
}

TEST_CASE("confusion matrix: absent class is NaN and excluded from the mean") {
  ConfusionMatrix cm(3);
  LabelMap truth(1, 2), pred(1, 2);
  truth.values = {0, 1};
  pred.values = {0, 1};
  cm.accumulate(pred, truth);
  auto iou = cm.iou_per_class();
  CHECK(std::isnan(iou[2]));
  CHECK(cm.mean_iou() == doctest::Approx(1.0));
}

TEST_CASE("confusion matrix: merge equals accumulating everything at once") {
  LabelMap t1(1, 3), p1(1, 3), t2(1, 3), p2(1, 3);
  t1.values = {0, 1, 1};
  p1.values = {0, 1, 0};
  t2.values = {1, 1, 0};
  p2.values = {1, 0, 0};
  ConfusionMatrix a(2), b(2), whole(2);
  a.accumulate(p1, t1);
  b.accumulate(p2, t2);
  a.merge(b);
  whole.accumulate(p1, t1);
  whole.accumulate(p2, t2);
  for (long i = 0; i < 2; ++i)
    for (long j = 0; j < 2; ++j) CHECK(a.at(i, j) == whole.at(i, j));
}

TEST_CASE("confusion matrix: report formats") {
  ConfusionMatrix cm = fixture();
  std::string text = cm.report_text();
  CHECK(text.find("mean_iou") != std::string::npos);

  auto j = nlohmann::json::parse(cm.report_json());
  CHECK(j["mean_iou"].get<double>() ==
        doctest::Approx((0.5 + 4.0 / 7.0) / 2.0));
  CHECK(j["per_class_iou"].size() == 2);

  // NaN IoU serializes as null
  ConfusionMatrix sparse(3);
  LabelMap t(1, 1), p(1, 1);
  t.values = {0};
  p.values = {0};
  sparse.accumulate(p, t);
  auto js = nlohmann::json::parse(sparse.report_json());
  CHECK(js["per_class_iou"][2].is_null());
}

TEST_CASE("argmax_channels: lowest index wins ties") {
  Tensor lg(Shape4{2, 3, 1, 2});
  // batch 0, pixel 0: class 2 wins; pixel 1: tie between 0 and 1 -> 0
  lg.at(0, 2, 0, 0) = 5.0;
  lg.at(0, 0, 0, 1) = 2.0;
  lg.at(0, 1, 0, 1) = 2.0;
  // batch 1, pixel 0: class 1
  lg.at(1, 1, 0, 0) = 1.0;
  LabelMap m0 = argmax_channels(lg, 0);
  CHECK(m0.values == std::vector<int>{2, 0});
  LabelMap m1 = argmax_channels(lg, 1);
  CHECK(m1.values[0] == 1);
}
