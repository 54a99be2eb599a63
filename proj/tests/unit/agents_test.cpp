#include "refagent/agents.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <random>

#include "e2e_support.hpp"
#include "refagent/errors.hpp"

namespace refagent {
namespace {

using testing::file_reply;
using testing::kOrderPath;
using testing::order_broken;
using testing::order_extracted;
using testing::shop_task;
using testing::TempDir;
using testing::write_file;
namespace fs = std::filesystem;

ScriptedBackend script(std::vector<std::string> replies) {
    std::vector<CompletionResponse> r;
    for (auto& s : replies) r.push_back({std::move(s), {}});
    return ScriptedBackend(std::move(r));
}

CompletionResponse tool_call(const std::string& name, std::map<std::string, std::string> args = {}) {
    return {"", {ToolCall{"", name, std::move(args)}}};
}

TEST(FileBlocks, Formats) {
    const auto f = parse_file_blocks(
        "text\n```java a/A.java\nclass A {}\n```\n```java path=b/B.java\nclass B {}\n```\n"
        "```java:c/C.java\nclass C {}\n```\n```\nplain\n```\n```java\nno path\n```\n");
    ASSERT_EQ(f.size(), 3u);
    EXPECT_EQ(f.at("a/A.java"), "class A {}\n");
    EXPECT_EQ(f.at("b/B.java"), "class B {}\n");
    EXPECT_EQ(f.at("c/C.java"), "class C {}\n");
    EXPECT_EQ(parse_file_blocks(render_file_blocks(f)), f);
}

TEST(FileBlocks, PathChecks) {
    EXPECT_NO_THROW(check_edit_path("src/A.java"));
    EXPECT_THROW(check_edit_path("/etc/passwd"), PreconditionError);
    EXPECT_THROW(check_edit_path("src/../../x.java"), PreconditionError);
    EXPECT_THROW(check_edit_path("build.log"), PreconditionError);
    EXPECT_THROW(check_edit_path(""), PreconditionError);
}

std::string apply_with_patch(const std::string& before, const std::string& diff) {
    TempDir dir;
    write_file(dir / "f.txt", before);
    write_file(dir / "d.patch", diff);
    const std::string cmd = "cd '" + dir.path().string() + "' && patch -s -p1 < d.patch > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) return "<patch failed>";
    return read_file(dir / "f.txt");
}

TEST(UnifiedDiff, SmallCases) {
    EXPECT_EQ(unified_diff({{"f.txt", "a\n"}}, {{"f.txt", "a\n"}}), "");
    EXPECT_EQ(unified_diff({{"f.txt", "a\nb\nc\n"}}, {{"f.txt", "a\nc\n"}}),
              "--- a/f.txt\n+++ b/f.txt\n@@ -1,3 +1,2 @@\n a\n-b\n c\n");
    EXPECT_EQ(unified_diff({}, {{"n.txt", "x\n"}}), "--- /dev/null\n+++ b/n.txt\n@@ -0,0 +1,1 @@\n+x\n");
    EXPECT_EQ(unified_diff({{"f.txt", "a"}}, {{"f.txt", "a\n"}}),
              "--- a/f.txt\n+++ b/f.txt\n@@ -1,1 +1,1 @@\n-a\n\\ No newline at end of file\n+a\n");
}

// The system `patch` tool is the oracle: applying the diff must reproduce the
// after text exactly.
TEST(UnifiedDiffProperty, PatchReproducesAfter) {
    std::mt19937 rng(99);
    std::uniform_int_distribution<int> len(0, 30), letter(0, 4), op(0, 9);
    for (int round = 0; round < 60; ++round) {
        std::string before, after;
        const int n = len(rng);
        for (int i = 0; i < n; ++i) {
            const std::string line = std::string(1, char('a' + letter(rng))) + "\n";
            before += line;
            const int o = op(rng);
            if (o == 0) continue;                                                // delete
            if (o == 1) after += std::string(1, char('v' + letter(rng))) + "\n";  // replace
            else after += line;
            if (o == 2) after += "inserted\n";
        }
        if (round % 7 == 0 && !after.empty()) after.pop_back();
        const std::string d = unified_diff({{"f.txt", before}}, {{"f.txt", after}});
        if (before == after) {
            EXPECT_EQ(d, "");
            continue;
        }
        EXPECT_EQ(apply_with_patch(before, d), after) << d;
    }
}

TEST(Workspace, ApplyResetAndDiff) {
    TempDir dir;
    write_file(dir / "a.txt", "one\n");
    Workspace ws(dir.path());
    ws.apply({{"a.txt", "two\n"}, {"new/b.txt", "b\n"}});
    EXPECT_EQ(read_file(dir / "a.txt"), "two\n");
    EXPECT_EQ(ws.touched(), (std::vector<std::string>{"a.txt", "new/b.txt"}));
    EXPECT_NE(ws.diff().find("+++ b/new/b.txt"), std::string::npos);
    EXPECT_THROW(ws.apply({{"ok.txt", "x"}, {"../escape.txt", "x"}}), PreconditionError);
    EXPECT_FALSE(fs::exists(dir / "ok.txt"));
    ws.reset();
    EXPECT_EQ(read_file(dir / "a.txt"), "one\n");
    EXPECT_FALSE(fs::exists(dir / "new/b.txt"));
    EXPECT_EQ(ws.diff(), "");
}

struct Fixture {
    TempDir dir;
    RefactoringTask task;
    SourceTree tree;
    CallGraph graph;
    DeveloperContext ctx;

    Fixture() : task(shop_task(dir.path())), tree(parse_tree(dir.path())), graph(build_call_graph(tree.units)) {
        ctx = {&tree, &graph, task.target, task.requested_type, {}};
    }
};

TEST(DeveloperTools, AnswerFromTheTree) {
    Fixture f;
    EXPECT_EQ(developer_tools().size(), 7u);
    EXPECT_NE(run_developer_tool(f.ctx, {"1", "get_method_to_be_refactored", {}}).find("public double total()"),
              std::string::npos);
    EXPECT_NE(run_developer_tool(f.ctx, {"1", "get_class_content", {{"class_name", "Invoice"}}}).find("render"),
              std::string::npos);
    EXPECT_NE(run_developer_tool(f.ctx, {"1", "get_project_structure", {}}).find("Order.java"), std::string::npos);
    EXPECT_EQ(run_developer_tool(f.ctx, {"1", "get_file_content", {{"path", kOrderPath}}}),
              read_file(f.dir / kOrderPath));
    const auto cg = run_developer_tool(f.ctx, {"1", "get_call_graph", {}});
    EXPECT_NE(cg.find("com.shop.Invoice#render/1"), std::string::npos) << cg;
    EXPECT_EQ(run_developer_tool(f.ctx, {"1", "get_similar_refactoring", {}}), "No similar refactorings found.\n");
    EXPECT_EQ(run_developer_tool(f.ctx, {"1", "get_weather", {}}), "error: unknown tool 'get_weather'");
    EXPECT_EQ(run_developer_tool(f.ctx, {"1", "get_file_content", {{"path", "nope"}}}).rfind("error:", 0), 0u);
}

TEST(DeveloperPrompt, FourStepsAndInjectedTools) {
    Fixture f;
    const auto msgs = developer_prompt(f.ctx);
    ASSERT_EQ(msgs.size(), 2u);
    const auto& u = msgs[1].content;
    for (const char* s : {"Step 1: Code Analysis.", "Step 2: Refactoring Method Reference.",
                          "Step 3: Structure Information Extraction.", "Step 4: Refactoring Execution.",
                          "[get_refactoring_operation]", "[get_method_to_be_refactored]", "[get_similar_refactoring]",
                          "Refactoring Type: ExtractMethod"}) {
        EXPECT_NE(u.find(s), std::string::npos) << s;
    }
}

TEST(DeveloperGenerate, OneToolRoundThenCode) {
    Fixture f;
    auto inner = std::make_shared<ScriptedBackend>(std::vector<CompletionResponse>{
        tool_call("get_project_structure"), {file_reply(order_extracted()), {}}});
    TempDir rec;
    RecordingBackend llm(inner, rec / "t.jsonl");
    auto msgs = developer_prompt(f.ctx);
    const auto cand = developer_generate(f.ctx, msgs, llm);
    llm.close();
    EXPECT_EQ(cand.tool_rounds, 1);
    EXPECT_EQ(cand.files.at(kOrderPath), order_extracted());
    const auto t = read_transcript(rec / "t.jsonl");
    ASSERT_EQ(t.size(), 2u);
    const auto& second = t[1].request.messages;
    ASSERT_EQ(second.size(), 4u);
    EXPECT_EQ(second[3].role, Role::Tool);
    EXPECT_EQ(second[3].tool_name, "get_project_structure");
    EXPECT_EQ(second[3].tool_call_id, "call_1");
    EXPECT_EQ(t[0].request.tools.size(), 7u);
    EXPECT_EQ(t[0].request.temperature, 0.0);
}

TEST(DeveloperGenerate, UnknownToolIsFedBack) {
    Fixture f;
    std::vector<CompletionResponse> r{tool_call("get_weather"), {file_reply(order_extracted()), {}}};
    ScriptedBackend llm(r);
    auto msgs = developer_prompt(f.ctx);
    const auto cand = developer_generate(f.ctx, msgs, llm);
    EXPECT_EQ(llm.remaining(), 0u);
    EXPECT_EQ(msgs[3].content, "error: unknown tool 'get_weather'");
    EXPECT_EQ(cand.files.size(), 1u);
}

TEST(DeveloperGenerate, TextProtocolToolCalls) {
    Fixture f;
    auto llm = script({"```tool\n{\"name\": \"get_class_content\", \"arguments\": {}}\n```\n",
                       file_reply(order_extracted())});
    auto msgs = developer_prompt(f.ctx);
    const auto cand = developer_generate(f.ctx, msgs, llm);
    EXPECT_EQ(cand.tool_rounds, 1);
    EXPECT_NE(msgs[3].content.find("class Order"), std::string::npos);
}

TEST(DeveloperGenerate, ToolRoundCap) {
    Fixture f;
    std::vector<CompletionResponse> r(16, tool_call("get_project_structure"));
    ScriptedBackend llm(r);
    auto msgs = developer_prompt(f.ctx);
    EXPECT_THROW(developer_generate(f.ctx, msgs, llm, 15), GenerationError);
    EXPECT_EQ(llm.remaining(), 0u);
}

TEST(Reviewer, StagesInOrder) {
    Fixture f;
    Workspace ws(f.dir.path());

    ws.apply({{kOrderPath, order_extracted()}});
    auto r = reviewer_review(f.tree, parse_tree(f.dir.path()), RefactoringType::ExtractMethod, ws.touched(),
                             "default", 1);
    ASSERT_EQ(r.reports.size(), 2u);
    EXPECT_TRUE(r.reports[0].passed);
    EXPECT_TRUE(r.reports[1].passed);
    EXPECT_TRUE(r.build_triggered);

    // byte-identical candidate
    ws.reset();
    ws.apply({{kOrderPath, read_file(f.dir / kOrderPath)}});
    r = reviewer_review(f.tree, parse_tree(f.dir.path()), RefactoringType::ExtractMethod, ws.touched(), "default", 2);
    ASSERT_EQ(r.reports.size(), 1u);
    EXPECT_FALSE(r.reports[0].passed);
    EXPECT_EQ(r.reports[0].findings[0].message, "no refactoring detected");
    EXPECT_FALSE(r.build_triggered);

    // 200-character line
    ws.reset();
    std::string long_line = "            discount = base * 0.1; // ";
    long_line += std::string(200 - long_line.size(), 'x');
    ASSERT_EQ(long_line.size(), 200u);
    ws.apply({{kOrderPath, order_extracted(long_line)}});
    r = reviewer_review(f.tree, parse_tree(f.dir.path()), RefactoringType::ExtractMethod, ws.touched(), "default", 3);
    ASSERT_EQ(r.reports.size(), 2u);
    EXPECT_TRUE(r.reports[0].passed);
    EXPECT_FALSE(r.reports[1].passed);
    ASSERT_EQ(r.reports[1].findings.size(), 1u);
    EXPECT_EQ(r.reports[1].findings[0].location, std::string(kOrderPath) + ":21");
    EXPECT_EQ(r.reports[1].findings[0].message.substr(0, 2), "R1");
}

TEST(Reviewer, PreexistingStyleFindingsAreNotCharged) {
    TempDir dir;
    auto task = shop_task(dir.path());
    std::string text = read_file(dir / kOrderPath);
    text.replace(text.find("    public String describe()"), 0, "    public void Old_Name() {\n    }\n\n");
    write_file(dir / kOrderPath, text);
    const SourceTree before = parse_tree(dir.path());
    std::string cand = order_extracted();
    cand.replace(cand.find("    public String describe()"), 0, "    public void Old_Name() {\n    }\n\n");
    Workspace ws(dir.path());
    ws.apply({{kOrderPath, cand}});
    const auto r = reviewer_review(before, parse_tree(dir.path()), RefactoringType::ExtractMethod, ws.touched(),
                                   "default", 1);
    EXPECT_TRUE(r.build_triggered);
}

void expect_sound(const RefactoringTask& task, const SourceTree& before) {
    const SourceTree after = parse_tree(task.workspace);
    EXPECT_TRUE(verify(before, after, task.requested_type).verified);
    EXPECT_TRUE(run_tests(task.workspace, task.config.build).green());
}

TEST(Pipeline, SuccessOnFirstRound) {
    TempDir dir;
    const auto task = shop_task(dir.path());
    const SourceTree before = parse_tree(dir.path());
    auto llm = script({file_reply(order_extracted())});
    const auto r = run_pipeline(task, llm);
    EXPECT_EQ(r.status, PipelineStatus::Success) << r.error;
    EXPECT_EQ(r.review_rounds, 1);
    EXPECT_TRUE(r.episodes.empty());
    EXPECT_EQ(r.after_files.at(kOrderPath), order_extracted());
    EXPECT_NE(r.final_diff.find("+    private double discountFor(double base) {"), std::string::npos);
    expect_sound(task, before);
    EXPECT_EQ(to_json_value(r)["status"], "success");
}

TEST(Pipeline, WrongTypeExhaustsReview) {
    TempDir dir;
    const auto task = shop_task(dir.path());
    std::vector<std::string> replies;
    for (int i = 0; i < 5; ++i) replies.push_back(file_reply(read_file(dir / kOrderPath)));
    auto llm = script(replies);
    const auto r = run_pipeline(task, llm);
    EXPECT_EQ(r.status, PipelineStatus::ReviewExhausted);
    EXPECT_EQ(r.review_rounds, 5);
    ASSERT_EQ(r.feedback_history.size(), 5u);
    for (const auto& fb : r.feedback_history) {
        EXPECT_EQ(fb.stage, FeedbackReport::Stage::Verification);
        EXPECT_FALSE(fb.passed);
    }
    EXPECT_EQ(llm.remaining(), 0u);
    EXPECT_EQ(exit_code(r.status), 2);
}

TEST(Pipeline, StyleFailureThenFix) {
    TempDir dir;
    const auto task = shop_task(dir.path());
    std::string bad = order_extracted();
    bad.replace(bad.find("discountFor"), 11, "Discount_For");
    bad.replace(bad.find("discountFor"), 11, "Discount_For");
    auto llm = script({file_reply(bad), file_reply(order_extracted())});
    const auto r = run_pipeline(task, llm);
    EXPECT_EQ(r.status, PipelineStatus::Success);
    ASSERT_EQ(r.feedback_history.size(), 4u);
    EXPECT_EQ(r.feedback_history[1].stage, FeedbackReport::Stage::Style);
    EXPECT_FALSE(r.feedback_history[1].passed);
    EXPECT_EQ(r.review_rounds, 2);
}

TEST(Pipeline, EscapingEditIsVerificationFailure) {
    TempDir dir;
    const auto task = shop_task(dir.path() / "ws");
    auto llm = script({file_reply("class X {}\n", "../outside.java"), file_reply(order_extracted())});
    const auto r = run_pipeline(task, llm);
    EXPECT_EQ(r.status, PipelineStatus::Success);
    EXPECT_FALSE(fs::exists(dir / "outside.java"));
    EXPECT_NE(r.feedback_history[0].findings[0].message.find("could not be applied"), std::string::npos)
        << r.feedback_history[0].render();
}

TEST(Pipeline, RepairOnFirstAttempt) {
    TempDir dir;
    const auto task = shop_task(dir.path());
    const SourceTree before = parse_tree(dir.path());
    auto llm = script({file_reply(order_broken()), file_reply(order_extracted(), kOrderPath, "Use 0.1.")});
    const auto r = run_pipeline(task, llm);
    EXPECT_EQ(r.status, PipelineStatus::Success);
    ASSERT_EQ(r.episodes.size(), 1u);
    EXPECT_TRUE(r.episodes[0].reflection.empty());
    EXPECT_NE(r.episodes[0].error_log.find("src/com/shop/Order.java:27: cannot find symbol"), std::string::npos)
        << r.episodes[0].error_log;
    EXPECT_TRUE(r.episodes[0].build_after.green());
    expect_sound(task, before);
}

TEST(Pipeline, RepairOnThirdAttempt) {
    TempDir dir;
    const auto task = shop_task(dir.path());
    auto llm = script({file_reply(order_broken()),
                       file_reply(order_broken()),                                   // attempt 1
                       "The patch kept undefinedVar.", "Replace it with 0.1.",         // attempt 2
                       file_reply(order_broken()),
                       "Still referencing undefinedVar on line 27.", "Use the literal.",  // attempt 3
                       file_reply(order_extracted())});
    const auto r = run_pipeline(task, llm);
    EXPECT_EQ(r.status, PipelineStatus::Success);
    ASSERT_EQ(r.episodes.size(), 3u);
    EXPECT_TRUE(r.episodes[0].reflection.empty());
    EXPECT_EQ(r.episodes[1].reflection, "The patch kept undefinedVar.");
    EXPECT_EQ(r.episodes[1].plan, "Replace it with 0.1.");
    EXPECT_EQ(r.episodes[2].reflection, "Still referencing undefinedVar on line 27.");
    EXPECT_EQ(llm.remaining(), 0u);
}

TEST(Pipeline, RepairExhaustedAfterCap) {
    TempDir dir;
    const auto task = shop_task(dir.path());
    std::vector<std::string> replies{file_reply(order_broken()), file_reply(order_broken())};
    for (int a = 2; a <= 20; ++a) {
        replies.push_back("reflection " + std::to_string(a));
        replies.push_back("plan " + std::to_string(a));
        replies.push_back(file_reply(order_broken()));
    }
    auto llm = script(replies);
    const auto r = run_pipeline(task, llm);
    EXPECT_EQ(r.status, PipelineStatus::RepairExhausted);
    EXPECT_EQ(r.episodes.size(), 20u);
    EXPECT_EQ(llm.remaining(), 0u);
    EXPECT_EQ(exit_code(r.status), 3);
}

TEST(Pipeline, RepairPromptsCarryTheConstraint) {
    TempDir dir;
    const auto task = shop_task(dir.path());
    auto inner = std::make_shared<ScriptedBackend>(std::vector<CompletionResponse>{
        {file_reply(order_broken()), {}}, {"no code here", {}}, {"r", {}}, {"p", {}}, {file_reply(order_extracted()), {}}});
    TempDir rec;
    RecordingBackend llm(inner, rec / "t.jsonl");
    const auto r = run_pipeline(task, llm);
    llm.close();
    EXPECT_EQ(r.status, PipelineStatus::Success);
    ASSERT_EQ(r.episodes.size(), 2u);
    EXPECT_FALSE(r.episodes[0].apply_error.empty());
    const auto t = read_transcript(rec / "t.jsonl");
    ASSERT_EQ(t.size(), 5u);
    for (std::size_t i = 1; i < t.size(); ++i) {
        EXPECT_NE(t[i].request.messages[0].content.find("should not modify the code's functionality"),
                  std::string::npos);
    }
}

TEST(Pipeline, BackendErrorKeepsPartialState) {
    TempDir dir;
    const auto task = shop_task(dir.path());
    auto llm = script({file_reply(read_file(dir / kOrderPath))});
    const auto r = run_pipeline(task, llm);
    EXPECT_EQ(r.status, PipelineStatus::BackendError);
    EXPECT_FALSE(r.error.empty());
    EXPECT_EQ(r.feedback_history.size(), 1u);
    EXPECT_EQ(exit_code(r.status), 4);
}

TEST(Pipeline, Preconditions) {
    TempDir dir;
    auto task = shop_task(dir.path());
    auto llm = script({});
    task.target.name = "nothing";
    EXPECT_THROW(run_pipeline(task, llm), PreconditionError);
    task.target.name = "total";
    write_file(dir / "src/com/shop/Bug.java", "package com.shop;\nclass Bug { /* BUG */ }\n");
    try {
        run_pipeline(task, llm);
        FAIL();
    } catch (const PreconditionError& e) {
        EXPECT_STREQ(e.what(), "workspace not green");
    }
    task.config.max_review_rounds = 0;
    EXPECT_THROW(run_pipeline(task, llm), ConfigError);
}

TEST(Pipeline, RetrievalUsesDescriptionCall) {
    TempDir dir;
    const auto task = shop_task(dir.path());
    RefactoringRecord rec;
    rec.id = "r1";
    rec.type = RefactoringType::ExtractMethod;
    rec.before_code = "double total() { double discount = 0; if (quantity > 10) { discount = 1; } return discount; }";
    rec.after_code = "double total() { return discountFor(); }";
    rec.description = "order total with bulk discount";
    const HashedTrigramEmbedder emb;
    const auto corpus = build_index({rec}, emb);
    auto inner = std::make_shared<ScriptedBackend>(
        std::vector<CompletionResponse>{{"Computes an order total with a discount.", {}}, {file_reply(order_extracted()), {}}});
    TempDir t;
    RecordingBackend llm(inner, t / "t.jsonl");
    const auto r = run_pipeline(task, llm, {&corpus, &emb});
    llm.close();
    EXPECT_EQ(r.status, PipelineStatus::Success);
    EXPECT_EQ(r.retrieved_ids, std::vector<std::string>{"r1"});
    const auto tr = read_transcript(t / "t.jsonl");
    ASSERT_EQ(tr.size(), 2u);
    EXPECT_NE(tr[1].request.messages[1].content.find("order total with bulk discount"), std::string::npos);
}

TEST(Pipeline, ReplayIsByteIdentical) {
    TempDir a, b, rec;
    const auto task_a = shop_task(a.path());
    auto inner = std::make_shared<ScriptedBackend>(std::vector<CompletionResponse>{
        tool_call("get_call_graph"), {file_reply(order_broken()), {}}, {file_reply(order_extracted()), {}}});
    RecordingBackend recorder(inner, rec / "t.jsonl");
    const auto first = run_pipeline(task_a, recorder);
    recorder.close();
    ASSERT_EQ(first.status, PipelineStatus::Success);

    const auto task_b = shop_task(b.path());
    auto replay = ReplayBackend::from_file(rec / "t.jsonl");
    const auto second = run_pipeline(task_b, *replay);
    EXPECT_EQ(second.status, PipelineStatus::Success) << second.error;
    EXPECT_EQ(second.final_diff, first.final_diff);
    EXPECT_EQ(read_file(b / kOrderPath), read_file(a / kOrderPath));
    EXPECT_EQ(replay->remaining(), 0u);
}

}  // namespace
}  // namespace refagent
