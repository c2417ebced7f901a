#pragma once

#include <string>
#include <vector>

namespace revhist::testing {

struct ExpectedLink {
  std::string target;
  std::string anchor;
};

struct AnchorCase {
  std::string name;
  std::string text;
  std::vector<ExpectedLink> links;
};

// Hand-written expectations for link extraction, one case per markup shape.
inline const std::vector<AnchorCase>& anchor_corpus()
{
  static const std::vector<AnchorCase> cases = {
    {"bare", "[[Barack Obama]]", {{"Barack Obama", "Barack Obama"}}},
    {"piped", "see [[Barack Obama|Obama]] won", {{"Barack Obama", "Obama"}}},
    {"fragment and file", "[[Euro 2012#Final|the final]] and [[File:x.png|thumb]]",
     {{"Euro 2012", "the final"}}},
    {"empty text", "", {}},
    {"no links", "plain text with [single] brackets", {}},
    {"two links in order", "[[Alpha]] then [[Beta|b]]", {{"Alpha", "Alpha"}, {"Beta", "b"}}},
    {"adjacent links", "[[A]][[B]]", {{"A", "A"}, {"B", "B"}}},
    {"repeated link", "[[A|x]] [[A|x]]", {{"A", "x"}, {"A", "x"}}},
    {"lowercase first letter", "[[barack Obama]]", {{"Barack Obama", "barack Obama"}}},
    {"underscores", "[[Foo_bar_baz]]", {{"Foo bar baz", "Foo_bar_baz"}}},
    {"collapsed spaces", "[[  multiple   spaces  ]]", {{"Multiple spaces", "multiple   spaces"}}},
    {"padded piped", "[[ Foo | bar ]]", {{"Foo", "bar"}}},
    {"bare fragment", "[[Euro 2012#Final]]", {{"Euro 2012", "Euro 2012#Final"}}},
    {"fragment only", "[[#History]]", {}},
    {"last pipe wins", "[[A|b|c]]", {{"A", "c"}}},
    {"pipe trick", "[[Foo|]]", {{"Foo", "Foo"}}},
    {"trailing empty pipe", "[[A|b|]]", {{"A", "A"}}},
    {"file excluded", "[[File:Photo.jpg]]", {}},
    {"image excluded", "[[Image:Photo.jpg|thumb|A caption]]", {}},
    {"category excluded", "[[Category:Living people]]", {}},
    {"category with sort key", "[[Category:People|Obama, Barack]]", {}},
    {"lowercase namespace excluded", "[[category:Foo]] [[file:a.png]]", {}},
    {"namespace with spaces", "[[ Image :a.png]]", {}},
    {"colon escapes category", "[[:Category:Foo]]", {{"Category:Foo", "Category:Foo"}}},
    {"colon escapes file", "[[:File:x.png|a file]]", {{"File:x.png", "a file"}}},
    {"other namespace kept", "[[Wikipedia:About]]", {{"Wikipedia:About", "Wikipedia:About"}}},
    {"talk namespace kept", "[[Talk:Foo|discussion]]", {{"Talk:Foo", "discussion"}}},
    {"caption link inside file", "[[File:x.png|thumb|caption with [[Inner]]]]",
     {{"Inner", "Inner"}}},
    {"link inside image caption", "[[Image:a.png|[[B|bee]]]]", {{"B", "bee"}}},
    {"unclosed", "[[Alpha and more text", {}},
    {"unclosed then closed", "[[A [[B]]", {{"B", "B"}}},
    {"closed then unclosed", "[[A]] [[B", {{"A", "A"}}},
    {"stray closers", "]] [[A]] ]]", {{"A", "A"}}},
    {"empty brackets", "[[]] and [[ ]]", {}},
    {"nested link in pipe", "[[A|[[B]]]]", {{"B", "B"}}},
    {"newline in target", "[[A\nB]]", {}},
    {"html in target", "[[<b>x</b>]]", {}},
    {"template in target", "[[{{tpl}}]]", {}},
    {"empty target with pipe", "[[ |x]]", {}},
    {"link trail", "[[bus]]es stop", {{"Bus", "buses"}}},
    {"piped trail", "[[Foo|Bar]]s", {{"Foo", "Bars"}}},
    {"no trail on uppercase", "[[A]]Bc", {{"A", "A"}}},
    {"no trail on apostrophe", "[[Bus]]'s", {{"Bus", "Bus"}}},
    {"no trail on digits", "[[A|x]]123", {{"A", "x"}}},
    {"no trail on non-ascii", "[[A]]é", {{"A", "A"}}},
    {"comment hides link", "<!-- [[Hidden]] --> [[Shown]]", {{"Shown", "Shown"}}},
    {"unclosed comment", "[[A]] <!-- [[B]]", {{"A", "A"}}},
    {"nowiki hides link", "<nowiki>[[No]]</nowiki> [[Yes]]", {{"Yes", "Yes"}}},
    {"unclosed nowiki hides nothing", "<nowiki>[[X]]", {{"X", "X"}}},
    {"nested template", "{{a|{{b|c}}}} [[X]]", {{"X", "X"}}},
    {"link inside template", "{{Infobox|spouse=[[Michelle Obama]]}}",
     {{"Michelle Obama", "Michelle Obama"}}},
    {"deeply nested template", "{{a|{{b|{{c|{{d|{{e|f}}}}}}}}}}[[After]]", {{"After", "After"}}},
    {"link in ref", "text<ref>[[Source]]</ref>", {{"Source", "Source"}}},
    {"external link ignored", "[http://example.org Example] [[Real]]", {{"Real", "Real"}}},
    {"unicode target", "[[éclair]]", {{"Éclair", "éclair"}}},
    {"cyrillic target", "[[москва|Moscow]]", {{"Москва", "Moscow"}}},
    {"cjk anchor", "[[Tokyo|東京]]", {{"Tokyo", "東京"}}},
    {"entity left alone", "[[AT&amp;T]]", {{"AT&amp;T", "AT&amp;T"}}},
    {"case preserved in anchor", "[[Usain Bolt|BOLT]]", {{"Usain Bolt", "BOLT"}}},
    {"spike anchor", "[[Olympic Games|olympic]] and [[Mo Farah|farah]]",
     {{"Olympic Games", "olympic"}, {"Mo Farah", "farah"}}},
  };
  return cases;
}

} // namespace revhist::testing
