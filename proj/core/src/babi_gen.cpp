#include "hopgate/babi_gen.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "hopgate/errors.hpp"
#include "hopgate/rng.hpp"

namespace hopgate {

namespace {

const std::array<std::string, 6> kActors = {"Mary", "John", "Daniel", "Sandra", "Eric", "Julie"};
const std::array<std::string, 6> kPlaces = {"bathroom", "hallway", "garden",
                                            "kitchen",  "bedroom", "office"};
const std::array<std::string, 4> kMoves = {"moved to the", "went to the", "journeyed to the",
                                           "travelled to the"};

struct Writer {
  std::ostringstream out;
  std::size_t questions = 0;
  std::size_t quota;
  std::size_t line = 1;

  explicit Writer(std::size_t quota) : quota(quota) {}

  void statement(const std::string& text) { out << line++ << ' ' << text << ".\n"; }

  void question(const std::string& text, const std::string& answer, std::size_t support) {
    out << line++ << ' ' << text << "?\t" << answer << '\t' << support << '\n';
    ++questions;
  }

  void new_story() { line = 1; }
  bool done() const { return questions >= quota; }
};

// Movement stories with each actor appearing at most once, so a single
// mention pins the answer. Story lengths vary between one and three
// question rounds.
void gen_movement_task(Writer& w, Rng& rng, bool yes_no) {
  while (!w.done()) {
    w.new_story();
    std::vector<std::size_t> order(kActors.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    struct Mention {
      std::size_t actor;
      std::size_t place;
      std::size_t line;
    };
    std::vector<Mention> mentioned;
    for (std::size_t q = 0; q < 3 && !w.done(); ++q) {
      for (std::size_t s = 0; s < 2; ++s) {
        const std::size_t actor = order[2 * q + s];
        const std::size_t place = rng.index(kPlaces.size());
        mentioned.push_back({actor, place, w.line});
        const bool stative = rng.index(5) < 2;
        w.statement(kActors[actor] + " " +
                    (stative ? "is in the" : kMoves[rng.index(kMoves.size())]) + " " +
                    kPlaces[place]);
      }
      const Mention& pick = mentioned[rng.index(mentioned.size())];
      if (!yes_no) {
        w.question("Where is " + kActors[pick.actor], kPlaces[pick.place], pick.line);
      } else {
        const bool truth = rng.index(2) == 0;
        std::size_t asked = pick.place;
        if (!truth) {
          asked = rng.index(kPlaces.size() - 1);
          if (asked >= pick.place) ++asked;
        }
        w.question("Is " + kActors[pick.actor] + " in the " + kPlaces[asked],
                   truth ? "yes" : "no", pick.line);
      }
    }
  }
}

void gen_motivation_task(Writer& w, Rng& rng) {
  const std::array<std::string, 4> actors = {"Yann", "Antoine", "Sumit", "Jason"};
  struct StateInfo {
    std::string state;
    std::string place;
    std::vector<std::string> objects;
  };
  const std::array<StateInfo, 4> states = {{
      {"hungry", "kitchen", {"apple", "pie"}},
      {"thirsty", "kitchen", {"milk"}},
      {"tired", "bedroom", {}},
      {"bored", "garden", {"football"}},
  }};
  const std::array<std::string, 3> grabs = {"got the", "grabbed the", "picked up the"};

  while (!w.done()) {
    // One actor's episode per story keeps the motivation unambiguous.
    w.new_story();
    const std::string& actor = actors[rng.index(actors.size())];
    const StateInfo& info = states[rng.index(states.size())];
    const std::size_t state_line = w.line;
    w.statement(actor + " is " + info.state);
    w.question("Where will " + actor + " go", info.place, state_line);
    if (w.done()) break;
    w.statement(actor + " " + (rng.index(2) == 0 ? "went to the " : "went back to the ") +
                info.place);
    w.question("Why did " + actor + " go to the " + info.place, info.state, state_line);
    if (w.done()) break;
    if (!info.objects.empty()) {
      const std::string& object = info.objects[rng.index(info.objects.size())];
      w.statement(actor + " " + grabs[rng.index(grabs.size())] + " " + object + " there");
      w.question("Why did " + actor + " get the " + object, info.state, state_line);
    }
  }
}

}  // namespace

std::string babi_task_slug(unsigned task) {
  switch (task) {
    case 1: return "single-supporting-fact";
    case 6: return "yes-no-questions";
    case 20: return "agents-motivations";
    default: throw ParameterError("no generator for task " + std::to_string(task));
  }
}

std::string generate_babi_task(unsigned task, std::uint64_t seed, std::size_t n_questions) {
  if (n_questions == 0) throw ParameterError("n_questions must be >= 1");
  Writer w(n_questions);
  Rng rng(seed);
  switch (task) {
    case 1: gen_movement_task(w, rng, /*yes_no=*/false); break;
    case 6: gen_movement_task(w, rng, /*yes_no=*/true); break;
    case 20: gen_motivation_task(w, rng); break;
    default: throw ParameterError("no generator for task " + std::to_string(task));
  }
  return w.out.str();
}

void generate_babi_dir(const std::filesystem::path& dir, const BabiGenConfig& config) {
  std::filesystem::create_directories(dir);
  for (unsigned task : config.tasks) {
    for (const bool train : {true, false}) {
      const std::uint64_t seed =
          config.seed * 1000003ULL + task * 2ULL + (train ? 0ULL : 1ULL);
      const auto path = dir / ("qa" + std::to_string(task) + "_" + babi_task_slug(task) +
                               (train ? "_train.txt" : "_test.txt"));
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      if (!out) throw ConfigError("cannot write " + path.string());
      out << generate_babi_task(task, seed, config.questions_per_file);
    }
  }
}

}  // namespace hopgate
