#include <gtest/gtest.h>

#include <filesystem>

#include "bdx/templates.hpp"

using namespace bdx;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a bdx::Error";
  return ErrorKind::Label;
}

const char* kFour = "A\tIs it faulty? #placeholder#\nB\tType: #placeholder#.\nC\tFix #placeholder#\nD\tRisk of #placeholder#\n";

ResponseTemplateSet shipped() {
  return ResponseTemplateSet::load(std::filesystem::path(BDX_ASSET_DIR) / "templates.tsv");
}

}  // namespace

TEST(Templates, ShippedAssetHasFourTasksWithOnePlaceholder) {
  auto t = shipped();
  for (char task : {'A', 'B', 'C', 'D'}) {
    EXPECT_EQ(ResponseTemplateSet::count_placeholders(t.get(task)), 1u) << task;
    EXPECT_EQ(t.prompt(task, "xyz").find("#placeholder#"), std::string::npos);
    EXPECT_NE(t.prompt(task, "xyz").find("xyz"), std::string::npos);
  }
}

TEST(Templates, SubstitutesInPlace) {
  auto t = ResponseTemplateSet::parse(kFour);
  EXPECT_EQ(t.prompt('B', "ball fault"), "Type: ball fault.");
  EXPECT_EQ(t.prompt('A', ""), "Is it faulty? ");
  EXPECT_EQ(kind_of([&] { t.get('E'); }), ErrorKind::Config);
}

TEST(Templates, RejectsMalformedFiles) {
  EXPECT_EQ(kind_of([] { ResponseTemplateSet::parse("A\tno slot\nB\t#placeholder#\nC\t#placeholder#\nD\t#placeholder#\n"); }),
            ErrorKind::Config);
  EXPECT_EQ(kind_of([] {
              ResponseTemplateSet::parse("A\t#placeholder# #placeholder#\nB\t#placeholder#\nC\t#placeholder#\nD\t#placeholder#\n");
            }),
            ErrorKind::Config);
  EXPECT_EQ(kind_of([] { ResponseTemplateSet::parse("A\t#placeholder#\nB\t#placeholder#\nC\t#placeholder#\n"); }),
            ErrorKind::Config);
  EXPECT_EQ(kind_of([] {
              ResponseTemplateSet::parse("A\t#placeholder#\nA\t#placeholder#\nB\t#placeholder#\nC\t#placeholder#\nD\t#placeholder#\n");
            }),
            ErrorKind::Config);
  EXPECT_EQ(kind_of([] { ResponseTemplateSet::parse("Z\t#placeholder#\n"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { ResponseTemplateSet::parse("A #placeholder#\n"); }), ErrorKind::Config);
}

TEST(Respond, TaskAIsTheFaultPredicate) {
  auto t = shipped();
  auto d = FaultDescriptionSet::defaults();
  EXPECT_EQ(respond(t, d, 'A', 0).answer, "no");
  for (int label = 1; label < kFaultClasses; ++label) EXPECT_EQ(respond(t, d, 'A', label).answer, "yes") << label;
}

TEST(Respond, SevereOuterFaultIsNamed) {
  auto r = respond(shipped(), FaultDescriptionSet::defaults(), 'B', 9);
  EXPECT_NE(r.answer.find("severe"), std::string::npos);
  EXPECT_NE(r.answer.find("outer ring"), std::string::npos);
  EXPECT_NE(r.prompt.find("severe fault of bearing outer ring"), std::string::npos);
}

TEST(Respond, HealthyAnswerSaysNormal) {
  auto r = respond(shipped(), FaultDescriptionSet::defaults(), 'C', 0);
  EXPECT_NE(r.answer.find("normal"), std::string::npos);
}

TEST(Respond, LabelOutsideDescriptionsFails) {
  auto d = FaultDescriptionSet::defaults();
  EXPECT_EQ(kind_of([&] { respond(shipped(), d, 'A', 10); }), ErrorKind::Label);
  EXPECT_EQ(kind_of([&] { respond(shipped(), d, 'A', -1); }), ErrorKind::Label);
}
