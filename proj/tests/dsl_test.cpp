#include <gtest/gtest.h>

#include <popproto/dsl.hpp>
#include <popproto/library.hpp>

#include "test_util.hpp"

using namespace popproto;

TEST(Dsl, UndeclaredStateIsReportedAtItsLine) {
    const std::string text =
        "protocol broken\n"
        "state A\n"
        "\n"
        "rule A : B -> A @ 1/2\n";
    try {
        parse(text);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4);
        EXPECT_NE(std::string(e.what()).find("B"), std::string::npos);
    }
}

TEST(Dsl, UnboundParameter) {
    EXPECT_THROW(parse("protocol p\nstate A\nstate B\nrule A : B -> A @ k\n"), ParseError);
}

TEST(Dsl, SourceOnlyProtocol) {
    const auto p = parse("protocol lonely\nstate X source\n");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_TRUE(p.is_source(0));
    EXPECT_TRUE(p.rules.empty());
    EXPECT_TRUE(validate(p).ok());
}

TEST(Dsl, SerializeIdentityHasNoRules) {
    const auto text = serialize(identity(build("po")));
    EXPECT_EQ(text.find("rule "), std::string::npos);
    EXPECT_NE(text.find("state X source"), std::string::npos);
}

TEST(Dsl, SerializedSourceRule) {
    const auto text = serialize(build("po"));
    EXPECT_NE(text.find("rule X : A1++ -> A1+ @ 1/3\n"), std::string::npos) << text;
}

TEST(Dsl, RoundTripsLibrary) {
    for (const auto& name : library_names()) {
        const auto p = build(name);
        std::string why;
        EXPECT_TRUE(same_rule_table(parse(serialize(p)), p, &why)) << name << ": " << why;
    }
}

TEST(Dsl, ElseBranchSplitsProbability) {
    const auto p = parse(
        "protocol coin\n"
        "state A\nstate B\nstate C\n"
        "rule A : B -> C @ 1/4 else A\n");
    const auto law = rule_table(p).law(p.at("A"), p.at("B"));
    EXPECT_EQ(law.at({p.at("A"), p.at("C")}).str(), "1/4");
    EXPECT_EQ(law.at({p.at("A"), p.at("A")}).str(), "3/4");
}

TEST(Dsl, FilesMatchBuilders) {
    const auto params = default_params();
    for (const char* name : {"rps", "po", "po_prime"}) {
        std::string why;
        EXPECT_TRUE(same_rule_table(parse(slurp(protocol_file(std::string(name) + ".pp"))), build(name, params), &why))
            << name << ": " << why;
    }
}

TEST(Dsl, ExtensionFilesMatchBuilders) {
    const auto params = default_params();
    const auto po = parse(slurp(protocol_file("po.pp")));
    const auto pm = parse_extension(slurp(protocol_file("pm-extension.pp")), po);
    std::string why;
    EXPECT_TRUE(same_rule_table(pm.law, build_pm_extension(po, params).law, &why)) << why;
    const auto po_pm = compose(po, pm);
    const auto pl = parse_extension(slurp(protocol_file("pl-extension.pp")), po_pm);
    EXPECT_TRUE(same_rule_table(compose_independent(po_pm, pl), build("detect", params), &why)) << why;
}

TEST(Dsl, BroadcastStackFromFiles) {
    const auto params = default_params();
    const auto po = parse(slurp(protocol_file("po.pp")));
    const auto first = tagged(po, "1");
    const auto pair = compose_independent(first, lift(tagged(po, "2"), first));
    const auto pb = parse_extension(slurp(protocol_file("pb-extension.pp")), pair);
    std::string why;
    EXPECT_TRUE(same_rule_table(compose_independent(pair, pb), build("bitbroadcast", params), &why)) << why;
}

TEST(Dsl, ExtensionParsedAsProtocolFails) {
    EXPECT_THROW(parse(slurp(protocol_file("pm-extension.pp"))), ParseError);
    EXPECT_THROW(parse_extension(slurp(protocol_file("po.pp")), build("po")), ParseError);
}
