#include "refagent/source_model.hpp"

#include <gtest/gtest.h>

#include <random>

#include "refagent/errors.hpp"
#include "test_support.hpp"

namespace refagent {
namespace {

using testing::TempDir;
using testing::write_tree;

TEST(ParseTree, DegenerateClass) {
    TempDir dir;
    write_tree(dir.path(), {{"A.java", "class A {}"}});
    const auto tree = parse_tree(dir.path());
    ASSERT_TRUE(tree.ok());
    ASSERT_EQ(tree.units.size(), 1u);
    ASSERT_EQ(tree.units[0].classes.size(), 1u);
    EXPECT_EQ(tree.units[0].classes[0].qualified_name, "A");
    EXPECT_TRUE(tree.units[0].classes[0].methods.empty());
}

TEST(ParseTree, TwoMethodsHaveDisjointSpans) {
    const auto tree = parse_tree(testing::fixture_path("source_model/callgraph"));
    ASSERT_TRUE(tree.ok());
    const auto* b = tree.find_class("com.acme.B");
    ASSERT_NE(b, nullptr);
    ASSERT_EQ(b->methods.size(), 2u);
    EXPECT_EQ(b->methods[0].span, (LineSpan{4, 6}));
    EXPECT_EQ(b->methods[1].span, (LineSpan{8, 10}));
    EXPECT_LT(b->methods[0].span.end, b->methods[1].span.start);
    EXPECT_EQ(b->span, (LineSpan{3, 11}));
}

TEST(ParseTree, UnbalancedBraceIsReportedWithLine) {
    EXPECT_THROW(parse_unit("A.java", "class A { void f( {"), ParseError);
    try {
        parse_unit("A.java", "\n\nclass A { void f( {");
    } catch (const ParseError& e) {
        EXPECT_EQ(e.path(), "A.java");
        EXPECT_EQ(e.line(), 3);
    }

    TempDir dir;
    write_tree(dir.path(), {{"A.java", "class A { void f( {"}, {"B.java", "class B {}"}});
    const auto tree = parse_tree(dir.path());
    ASSERT_EQ(tree.failures.size(), 1u);
    EXPECT_EQ(tree.failures[0].path, "A.java");
    EXPECT_EQ(tree.failures[0].line, 1);
    EXPECT_EQ(tree.units.size(), 1u);
    ASSERT_FALSE(tree.diagnostics.empty());
    EXPECT_EQ(tree.diagnostics[0].str().rfind("ERROR A.java:1 ", 0), 0u);
    EXPECT_TRUE(tree.structure.contains("A.java"));
}

TEST(ParseTree, UnreadableRootIsIoError) {
    EXPECT_THROW(parse_tree("/nonexistent/refagent/dir"), IoError);
}

TEST(ParseUnit, HeadersFieldsAndSignatures) {
    const auto unit = parse_unit("x/Foo.java", R"(package a.b;
import java.util.List;
import static java.lang.Math.max;

@SuppressWarnings("unchecked")
public final class Foo<T extends Comparable<T>> extends Base implements Runnable, java.io.Serializable {
    private static final int LIMIT = 3, OTHER = 4;
    private List<Map<String, Integer>> items;
    int[] arr = {1, 2, 3};

    public Foo(int n) { this.n = n; }

    @Override
    public <R> Map<String, R> convert(final List<? extends T> in, Map<String, Integer> m, String... rest) throws IOException {
        return null;
    }

    abstract void noBody(int x);

    static class Inner {
        void g() {}
    }

    interface Cb { void on(int code); }

    enum Color { RED, GREEN("g") { void x() {} }; int code() { return 1; } }
}
)");
    EXPECT_EQ(unit.package, "a.b");
    ASSERT_EQ(unit.imports.size(), 2u);
    EXPECT_EQ(unit.imports[1], "static java.lang.Math.max");
    ASSERT_EQ(unit.classes.size(), 4u);
    const auto& foo = unit.classes[0];
    EXPECT_EQ(foo.qualified_name, "a.b.Foo");
    ASSERT_TRUE(foo.extends.has_value());
    EXPECT_EQ(*foo.extends, "Base");
    EXPECT_EQ(foo.implements, (std::vector<std::string>{"Runnable", "java.io.Serializable"}));
    ASSERT_EQ(foo.fields.size(), 3u);
    EXPECT_EQ(foo.fields[0].name, "LIMIT");
    EXPECT_EQ(foo.fields[1].name, "items");
    EXPECT_EQ(foo.fields[1].type, "List<Map<String, Integer>>");
    EXPECT_EQ(foo.fields[2].name, "arr");
    ASSERT_EQ(foo.methods.size(), 3u);
    EXPECT_TRUE(foo.methods[0].is_constructor);
    const auto& convert = foo.methods[1];
    EXPECT_EQ(convert.name, "convert");
    EXPECT_EQ(convert.return_type, "<R> Map<String, R>");
    ASSERT_EQ(convert.params.size(), 3u);
    EXPECT_EQ(convert.params[0].type, "List<? extends T>");
    EXPECT_EQ(convert.params[0].name, "in");
    EXPECT_EQ(convert.params[2].type, "String...");
    EXPECT_EQ(convert.throws_clause, "throws IOException");
    EXPECT_TRUE(convert.modifiers.count("@Override"));
    EXPECT_FALSE(foo.methods[2].has_body);
    EXPECT_EQ(unit.classes[1].qualified_name, "a.b.Foo.Inner");
    EXPECT_EQ(unit.classes[2].kind, ClassKind::Interface);
    EXPECT_EQ(unit.classes[3].qualified_name, "a.b.Foo.Color");
    ASSERT_EQ(unit.classes[3].methods.size(), 1u);
    EXPECT_EQ(unit.classes[3].methods[0].name, "code");
}

TEST(ParseUnit, DuplicateSignatureRejected) {
    EXPECT_THROW(parse_unit("A.java", "class A { void f(int a) {} void f(int b) {} }"), ParseError);
    EXPECT_NO_THROW(parse_unit("A.java", "class A { void f(int a) {} void f(long b) {} }"));
}

TEST(ParseUnit, DuplicateParameterRejected) {
    EXPECT_THROW(parse_unit("A.java", "class A { void f(int a, int a) {} }"), ParseError);
}

TEST(NormalizeStatement, Examples) {
    EXPECT_EQ(normalize_statement("int  x = 1 ; // init"), "int x = 1;");
    EXPECT_EQ(normalize_statement("x=1;"), "x=1;");
    EXPECT_EQ(normalize_statement("/*a*/ return   y ;"), "return y;");
    EXPECT_EQ(normalize_statement(""), "");
    EXPECT_EQ(normalize_statement("s = \"a  //b\" ;"), "s = \"a  //b\";");
    EXPECT_EQ(normalize_statement("if (x)\n\t{"), "if (x) {");
}

std::string random_statement(std::mt19937& rng) {
    static const std::vector<std::string> pieces = {
        "x", "y1", "=", "==", ";", " ", "  ", "\t", "\n", "//c\n", "/*k*/", "/* a ; b */", "(", ")", "{",
        "}", "\"s  t\"", "'c'", "'\\''", "\"a\\\"b\"", "+", "/", "*", "return", ",", "\"unterminated", "/*open"};
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
    std::uniform_int_distribution<int> len(0, 14);
    std::string out;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) out += pieces[pick(rng)];
    return out;
}

TEST(NormalizeStatement, IdempotentOnRandomTokenSequences) {
    std::mt19937 rng(20240611);
    for (int i = 0; i < 5000; ++i) {
        const auto raw = random_statement(rng);
        const auto once = normalize_statement(raw);
        ASSERT_EQ(normalize_statement(once), once) << "input: " << raw;
    }
}

TEST(SplitStatements, KindsAndDepths) {
    const auto st = split_statements("if (x) { a(); } else { b(); } for (int i = 0; i < n; i++) { { c(); } }");
    std::vector<std::pair<std::string, StatementKind>> got;
    for (const auto& s : st) got.emplace_back(s.normalized, s.kind);
    using K = StatementKind;
    const std::vector<std::pair<std::string, StatementKind>> want = {
        {"if (x) {", K::ControlHeader}, {"a();", K::Simple},       {"}", K::BlockClose},
        {"else {", K::ControlHeader},   {"b();", K::Simple},       {"}", K::BlockClose},
        {"for (int i = 0; i < n; i++) {", K::ControlHeader},        {"{", K::BlockOpen},
        {"c();", K::Simple},            {"}", K::BlockClose},      {"}", K::BlockClose}};
    EXPECT_EQ(got, want);
    EXPECT_EQ(st[1].depth, 1);
    EXPECT_EQ(st[8].depth, 2);
    EXPECT_EQ(st[9].depth, st[7].depth);
    EXPECT_EQ(st[10].depth, st[6].depth);
    for (std::size_t i = 0; i < st.size(); ++i) EXPECT_EQ(st[i].index, static_cast<int>(i));
}

TEST(SplitStatements, ExpressionBracesStayInsideStatement) {
    const auto st = split_statements(
        "int[] a = {1, 2};\n"
        "Runnable r = () -> { go(); };\n"
        "list.forEach(x -> { use(x); });\n"
        "Object o = new Object() { public String toString() { return \"o\"; } };\n"
        "return;");
    ASSERT_EQ(st.size(), 5u);
    EXPECT_EQ(st[1].normalized, "Runnable r = () -> { go(); };");
    EXPECT_EQ(st[2].line, 3);
    for (const auto& s : st) EXPECT_EQ(s.kind, StatementKind::Simple);
}

TEST(SplitStatements, BlockCloseDepthMatchesOpener) {
    const auto st = split_statements("while (a) { if (b) { try { x(); } catch (E e) { y(); } } }");
    std::vector<int> stack;
    for (const auto& s : st) {
        if (s.opens_block()) stack.push_back(s.depth);
        if (s.kind == StatementKind::BlockClose) {
            ASSERT_FALSE(stack.empty());
            EXPECT_EQ(s.depth, stack.back());
            stack.pop_back();
        }
    }
    EXPECT_TRUE(stack.empty());
}

class CallGraphFixture : public ::testing::Test {
protected:
    void SetUp() override {
        tree_ = parse_tree(testing::fixture_path("source_model/callgraph"));
        ASSERT_TRUE(tree_.ok());
        graph_ = build_call_graph(tree_.units);
    }
    SourceTree tree_;
    CallGraph graph_;
};

TEST_F(CallGraphFixture, EdgesEqualHandEnumeration) {
    const MethodRef f{"com.acme.A", "f", 1}, g{"com.acme.A", "g", 1}, helper{"com.acme.A", "helper", 0},
        h{"com.acme.B", "h", 2}, call{"com.acme.B", "call", 0};
    const std::set<std::pair<MethodRef, MethodRef>> want = {{f, g}, {f, h}, {f, helper}, {call, f}};
    EXPECT_EQ(graph_.edges, want);
    EXPECT_EQ(graph_.nodes.size(), 5u);
}

TEST_F(CallGraphFixture, CalleesSortedAndCallers) {
    const MethodRef f{"com.acme.A", "f", 1};
    const auto callees = direct_callees(graph_, f);
    ASSERT_EQ(callees.size(), 3u);
    EXPECT_EQ(callees[0].str(), "com.acme.A#g/1");
    EXPECT_EQ(callees[1].str(), "com.acme.A#helper/0");
    EXPECT_EQ(callees[2].str(), "com.acme.B#h/2");
    const auto callers = direct_callers(graph_, f);
    ASSERT_EQ(callers.size(), 1u);
    EXPECT_EQ(callers[0].str(), "com.acme.B#call/0");
    EXPECT_TRUE(direct_callees(graph_, MethodRef{"com.acme.A", "helper", 0}).empty());
    EXPECT_THROW(direct_callers(graph_, MethodRef{"com.acme.A", "missing", 0}), LookupError);
}

TEST_F(CallGraphFixture, ClassAndFileContent) {
    const auto file = file_content(tree_.structure, "src/com/acme/B.java");
    EXPECT_EQ(file, read_file(testing::fixture_path("source_model/callgraph/src/com/acme/B.java")));
    const auto cls = class_content(tree_.units, "com.acme.B");
    // lines 3..11 of the file
    std::size_t pos = 0;
    for (int line = 1; line < 3; ++line) pos = file.find('\n', pos) + 1;
    EXPECT_EQ(cls, file.substr(pos));
    EXPECT_THROW(class_content(tree_.units, "com.acme.Nope"), LookupError);
    EXPECT_THROW(file_content(tree_.structure, "src/Nope.java"), LookupError);
    EXPECT_TRUE(tree_.structure.contains("README.txt"));
    EXPECT_NE(tree_.structure.render().find("    com/\n"), std::string::npos);
}

TEST(CallGraph, SingleLocalCallAndEmptyMethod) {
    const auto unit = parse_unit("A.java", "class A { void f() { g(); } void g() {} void k() { int x = 1; } }");
    const auto graph = build_call_graph(std::span(&unit, 1));
    EXPECT_EQ(graph.edges.size(), 1u);
    EXPECT_TRUE(graph.edges.count({MethodRef{"A", "f", 0}, MethodRef{"A", "g", 0}}));
    EXPECT_TRUE(direct_callees(graph, MethodRef{"A", "k", 0}).empty());
}

TEST(CallGraph, AmbiguousCallIsOmittedWithDiagnostic) {
    const auto tree = parse_sources({{"C.java", "class C { void run() {} }"},
                                     {"D.java", "class D { void run() {} }"},
                                     {"E.java", "class E {\n void go() {\n run();\n } }"}});
    ASSERT_TRUE(tree.ok());
    const auto graph = build_call_graph(tree.units);
    EXPECT_TRUE(graph.edges.empty());
    ASSERT_EQ(graph.diagnostics.size(), 1u);
    EXPECT_EQ(graph.diagnostics[0].str().rfind("WARNING E.java:3 ambiguous call run/0", 0), 0u);
}

TEST(SourceModelInvariants, ReparseStableAndRawIsSubstring) {
    const auto tree = parse_tree(testing::fixture_path("source_model/callgraph"));
    for (const auto& unit : tree.units) {
        const auto again = parse_unit(unit.path, unit.text);
        ASSERT_EQ(again.classes.size(), unit.classes.size());
        for (std::size_t c = 0; c < unit.classes.size(); ++c) {
            const auto& a = unit.classes[c];
            const auto& b = again.classes[c];
            EXPECT_EQ(a.signature(), b.signature());
            ASSERT_EQ(a.methods.size(), b.methods.size());
            for (std::size_t m = 0; m < a.methods.size(); ++m) {
                EXPECT_EQ(a.methods[m].signature(), b.methods[m].signature());
                EXPECT_EQ(a.methods[m].normalized_body(), b.methods[m].normalized_body());
                for (const auto& st : a.methods[m].body) {
                    EXPECT_NE(unit.text.find(st.raw), std::string::npos) << st.raw;
                }
            }
        }
    }
}

TEST(MethodRefText, RoundTrip) {
    const MethodRef r{"a.b.C", "run", 2};
    EXPECT_EQ(MethodRef::parse(r.str()), r);
    EXPECT_THROW(MethodRef::parse("nonsense"), LookupError);
}

}  // namespace
}  // namespace refagent
