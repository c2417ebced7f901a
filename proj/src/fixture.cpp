#include "revhist/fixture.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/iostreams/copy.hpp>
#include <boost/iostreams/device/back_inserter.hpp>
#include <boost/iostreams/filter/bzip2.hpp>
#include <boost/iostreams/filter/gzip.hpp>
#include <boost/iostreams/filtering_stream.hpp>

#include "revhist/error.hpp"
#include "revhist/record_io.hpp"
#include "revhist/rng.hpp"

namespace revhist::fixture {

namespace {

using namespace std::chrono;

constexpr std::string_view kOnsets[] = {"b", "k", "l", "m", "n", "p", "r",
                                        "s", "t", "v", "d", "g", "br", "st",
                                        "tr", "ch"};
constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
constexpr std::string_view kUnicodeWords[] = {"zürich", "café",  "naïve",
                                              "ελλάδα", "москва", "東京",
                                              "größe",  "señor"};
constexpr std::string_view kTemplates[] = {"Infobox person", "Citation needed",
                                           "Reflist", "Main", "Infobox country"};

std::string make_word(Rng& rng)
{
  std::string w;
  auto syllables = 2 + rng.below(2);
  for (std::uint64_t i = 0; i < syllables; ++i) {
    w += kOnsets[rng.below(std::size(kOnsets))];
    w += kVowels[rng.below(std::size(kVowels))];
  }
  return w;
}

std::string capitalize(std::string w)
{
  if (!w.empty() && w[0] >= 'a' && w[0] <= 'z')
    w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

// Zipf-like pick: squaring a uniform draw skews toward low ranks.
const std::string& pick(const std::vector<std::string>& vocab, Rng& rng)
{
  double u = rng.unit();
  return vocab[static_cast<std::size_t>(u * u * static_cast<double>(vocab.size()))];
}

struct PagePlan {
  PageHeader header;
  std::vector<Timestamp> times;
  std::vector<bool> spike_revision;
  const EventSpike* spike = nullptr;
};

class Generator {
public:
  explicit Generator(const FixtureOptions& o) : opt_(o), rng_(o.seed)
  {
    vocab_.reserve(3000);
    std::set<std::string> seen;
    while (vocab_.size() < 3000) {
      auto w = make_word(rng_);
      if (seen.insert(w).second)
        vocab_.push_back(std::move(w));
    }
    for (auto w : kUnicodeWords)
      vocab_.insert(vocab_.begin() + static_cast<long>(rng_.below(vocab_.size())),
                    std::string(w));
  }

  std::vector<PagePlan> plan_pages()
  {
    std::vector<PagePlan> pages;
    std::set<std::string> titles;
    auto total = opt_.pages + opt_.spikes.size();
    for (std::size_t i = 0; i < total; ++i) {
      PagePlan p;
      p.header.page_id = 10 * (i + 1);
      if (i >= opt_.pages) {
        p.spike = &opt_.spikes[i - opt_.pages];
        p.header.title = p.spike->title;
      } else {
        std::string title;
        do {
          title = capitalize(make_word(rng_)) + " " + capitalize(make_word(rng_));
        } while (!titles.insert(title).second);
        double kind = rng_.unit();
        if (kind < opt_.talk_fraction) {
          p.header.ns = 1;
          p.header.title = "Talk:" + title;
        } else if (kind < opt_.talk_fraction + opt_.file_fraction) {
          p.header.ns = 6;
          p.header.title = "File:" + title + ".png";
        } else {
          p.header.title = title;
          article_titles_.push_back(title);
        }
      }
      auto span = static_cast<std::uint64_t>(std::max(1, opt_.span_days)) * 86400;
      for (std::size_t r = 0; r < opt_.revisions_per_page; ++r) {
        p.times.push_back(to_timestamp(opt_.start_date) +
                          seconds{static_cast<long>(rng_.below(span))});
        p.spike_revision.push_back(false);
      }
      if (p.spike) {
        auto window = static_cast<std::uint64_t>(std::max(1, p.spike->days)) * 86400;
        for (std::size_t r = 0; r < p.spike->revisions; ++r) {
          p.times.push_back(to_timestamp(p.spike->start) +
                            seconds{static_cast<long>(rng_.below(window))});
          p.spike_revision.push_back(true);
        }
      }
      // Keep the spike flags attached to their instants while sorting.
      std::vector<std::pair<Timestamp, bool>> tagged;
      for (std::size_t k = 0; k < p.times.size(); ++k)
        tagged.emplace_back(p.times[k], p.spike_revision[k]);
      std::sort(tagged.begin(), tagged.end());
      for (std::size_t k = 0; k < tagged.size(); ++k) {
        p.times[k] = tagged[k].first;
        p.spike_revision[k] = tagged[k].second;
      }
      pages.push_back(std::move(p));
    }
    for (auto& s : opt_.spikes)
      article_titles_.push_back(s.title);
    for (auto& p : pages)
      if (!p.spike && p.header.ns == 0 && rng_.chance(opt_.redirect_fraction) &&
          article_titles_.size() > 1)
        p.header.redirect_target = article_titles_[rng_.below(article_titles_.size())];
    return pages;
  }

  std::string link(Rng& rng)
  {
    const auto& target = article_titles_.empty()
                           ? vocab_[0]
                           : article_titles_[rng.below(article_titles_.size())];
    switch (rng.below(4)) {
      case 0: return "[[" + target + "]]";
      case 1: return "[[" + target + "|" + pick(vocab_, rng) + "]]";
      case 2: return "[[" + target + "#History|" + pick(vocab_, rng) + " " +
                     pick(vocab_, rng) + "]]";
      default: return "[[" + target + "|" + pick(vocab_, rng) + "]]";
    }
  }

  std::string piece(Rng& rng)
  {
    double u = rng.unit();
    if (u < 0.06)
      return link(rng);
    if (u < 0.065)
      return "<ref>" + pick(vocab_, rng) + " " + pick(vocab_, rng) + "</ref>";
    if (u < 0.068)
      return "<!-- " + pick(vocab_, rng) + " -->";
    if (u < 0.08)
      return "'''" + pick(vocab_, rng) + "'''";
    return pick(vocab_, rng) + (rng.chance(0.08) ? "." : "");
  }

  std::vector<std::string> base_text(const PagePlan& p)
  {
    std::vector<std::string> pieces;
    if (p.header.redirect_target)
      return {"#REDIRECT [[" + *p.header.redirect_target + "]]"};
    if (rng_.chance(0.5))
      pieces.push_back("{{" + std::string(kTemplates[rng_.below(std::size(kTemplates))]) +
                       "|name=" + pick(vocab_, rng_) + "|note={{" +
                       std::string(kTemplates[rng_.below(std::size(kTemplates))]) +
                       "}}}}");
    for (std::size_t i = 0; i < opt_.words_per_page; ++i)
      pieces.push_back(piece(rng_));
    if (p.header.ns == 0)
      pieces.push_back("[[Category:" + capitalize(pick(vocab_, rng_)) + "]]");
    return pieces;
  }

  void mutate(std::vector<std::string>& pieces)
  {
    auto edits = 1 + rng_.below(3);
    for (std::uint64_t e = 0; e < edits; ++e) {
      auto op = rng_.below(3);
      auto pos = pieces.empty() ? 0 : rng_.below(pieces.size());
      if (op == 0 && !pieces.empty())
        pieces[pos] = piece(rng_);
      else if (op == 1 || pieces.size() < 4)
        pieces.insert(pieces.begin() + static_cast<long>(pos), piece(rng_));
      else
        pieces.erase(pieces.begin() + static_cast<long>(pos));
    }
  }

  static std::string join(const std::vector<std::string>& pieces)
  {
    std::string out;
    for (auto& p : pieces) {
      if (!out.empty())
        out.push_back(' ');
      out += p;
    }
    return out;
  }

  template <typename Emit>
  void write_page(const PagePlan& p, Emit&& emit)
  {
    auto pieces = base_text(p);
    std::optional<std::uint64_t> parent;
    std::string out;
    records::append_page_open(out, p.header);
    for (std::size_t r = 0; r < p.times.size(); ++r) {
      RevisionRecord rev;
      rev.page = p.header;
      rev.revision_id = ++next_rev_id_;
      rev.parent_id = parent;
      rev.timestamp = p.times[r];
      if (r > 0 && !p.header.redirect_target)
        mutate(pieces);
      if (rng_.chance(0.2))
        rev.contributor = "10.0." + std::to_string(rng_.below(256)) + "." +
                          std::to_string(rng_.below(256));
      else if (!rng_.chance(0.02))
        rev.contributor = capitalize(make_word(rng_));
      if (rng_.chance(0.7))
        rev.comment = pick(vocab_, rng_) + " " + pick(vocab_, rng_);
      if (p.spike_revision[r]) {
        std::string burst;
        auto n = 1 + rng_.below(3);
        for (std::uint64_t k = 0; k < n; ++k)
          burst += " [[" + p.header.title + "|" + p.spike->anchor + "]]";
        rev.text = join(pieces) + burst;
      } else if (rng_.chance(opt_.deleted_fraction)) {
        rev.text_deleted = true;
      } else {
        rev.text = join(pieces);
      }
      records::append_revision(out, rev);
      parent = rev.revision_id;
      ++summary_.revisions;
      if (out.size() > (1u << 20)) {
        emit(out);
        out.clear();
      }
    }
    records::append_page_close(out);
    emit(out);
    ++summary_.pages;
    summary_.page_ids.push_back(p.header.page_id);
  }

  FixtureSummary summary_;

private:
  const FixtureOptions& opt_;
  Rng rng_;
  std::vector<std::string> vocab_;
  std::vector<std::string> article_titles_;
  std::uint64_t next_rev_id_ = 0;
};

std::string bzip2_stream(std::string_view data)
{
  std::string out;
  namespace io = boost::iostreams;
  io::filtering_ostream os;
  os.push(io::bzip2_compressor());
  os.push(io::back_inserter(out));
  os.write(data.data(), static_cast<std::streamsize>(data.size()));
  os.reset();
  return out;
}

} // namespace

FixtureSummary write_fixture(const FixtureOptions& options, std::ostream& out)
{
  Generator gen(options);
  auto pages = gen.plan_pages();
  std::uint64_t bytes = 0;
  auto emit = [&](std::string_view s) {
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
    bytes += s.size();
  };
  emit(records::kXmlHeader);
  for (auto& p : pages)
    gen.write_page(p, emit);
  emit(records::kXmlFooter);
  if (!out)
    throw Error(ErrorCode::io_error, "fixture write failed");
  gen.summary_.bytes = bytes;
  return gen.summary_;
}

FixtureSummary generate_fixture(const FixtureOptions& options,
                                const std::filesystem::path& path)
{
  namespace io = boost::iostreams;
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file)
    throw Error(ErrorCode::io_error, "cannot create '" + path.string() + "'");

  FixtureSummary summary;
  switch (options.compression) {
    case dump::Compression::none:
      summary = write_fixture(options, file);
      break;
    case dump::Compression::gzip:
    case dump::Compression::bzip2: {
      io::filtering_ostream os;
      if (options.compression == dump::Compression::gzip)
        os.push(io::gzip_compressor());
      else
        os.push(io::bzip2_compressor());
      os.push(file);
      summary = write_fixture(options, os);
      os.reset();
      break;
    }
    case dump::Compression::bzip2_multistream: {
      Generator gen(options);
      auto pages = gen.plan_pages();
      std::string group;
      std::uint64_t bytes = 0;
      auto flush = [&] {
        if (group.empty())
          return;
        auto packed = bzip2_stream(group);
        file.write(packed.data(), static_cast<std::streamsize>(packed.size()));
        bytes += group.size();
        group.clear();
      };
      group.append(records::kXmlHeader);
      flush();
      auto per_stream = std::max<std::size_t>(1, options.pages_per_stream);
      for (std::size_t i = 0; i < pages.size(); ++i) {
        gen.write_page(pages[i], [&](std::string_view s) { group.append(s); });
        if ((i + 1) % per_stream == 0)
          flush();
      }
      flush();
      group.append(records::kXmlFooter);
      flush();
      summary = gen.summary_;
      summary.bytes = bytes;
      break;
    }
  }
  file.close();
  if (!file)
    throw Error(ErrorCode::io_error, "fixture write failed on " + path.string());
  return summary;
}

std::vector<EventSpike> exploration_spikes()
{
  using std::chrono::year;
  return {
    {"Obama", Date{year{2012} / 11 / 5}, 7, 60, "obama"},
    {"UEFA Euro 2012", Date{year{2012} / 6 / 25}, 7, 60, "euro"},
    {"Olympic Games", Date{year{2012} / 7 / 30}, 7, 60, "olympic"},
    {"Usain Bolt", Date{year{2012} / 8 / 6}, 7, 50, "bolt"},
    {"Mo Farah", Date{year{2012} / 8 / 6}, 7, 40, "farah"},
  };
}

} // namespace revhist::fixture
