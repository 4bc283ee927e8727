// Shared test fixtures: toy corpora and a synthetic pretrained embedding
// table with GloVe-like statistics.
#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "reqvae/corpus.hpp"
#include "reqvae/embeddings.hpp"
#include "reqvae/rng.hpp"
#include "reqvae/tokenizer.hpp"

// 32 short single-clause requirements with unique subjects; vocabulary well
// under 200 words. Small enough to memorize, varied enough that memorization
// requires an informative latent code.
inline std::vector<std::string> toy_requirements() {
  return {
      "The camera shall record every dock inspection.",
      "The printer shall warn when paper runs low.",
      "The scanner shall reject oversized documents.",
      "The router shall drop packets from unknown hosts.",
      "The charger shall stop once the battery fills.",
      "The elevator shall return to the lobby when idle.",
      "The turbine shall halt under excessive vibration.",
      "The compiler shall report each syntax error line.",
      "The autopilot shall hold altitude within fifty feet.",
      "The firewall shall log every blocked connection.",
      "The thermostat shall keep the room at target warmth.",
      "The sprinkler shall activate when smoke appears.",
      "The conveyor shall pause while the gate stays open.",
      "The radio shall scan channels during startup.",
      "The pump shall maintain steady pipe pressure.",
      "The display shall dim in dark environments.",
      "The keypad shall lock after three failed codes.",
      "The backup shall verify its archive nightly.",
      "The antenna shall track the strongest signal.",
      "The gearbox shall disengage on torque spikes.",
      "The browser shall flag insecure pages before loading.",
      "The parser shall accept quoted or bare values.",
      "The freezer shall alarm if the door stays open.",
      "The drone shall land when the link drops.",
      "The ticket machine shall refund cancelled purchases.",
      "The badge reader shall grant access during office hours.",
      "The mixer shall measure ingredients to the gram.",
      "The projector shall cool the lamp before shutdown.",
      "The seatbelt sensor shall chime until all buckle.",
      "The irrigation controller shall skip watering after rain.",
      "The vending machine shall track inventory per slot.",
      "The loader shall balance cargo across both axles.",
  };
}

// Eight very short sentences for quick training-convergence checks.
inline std::vector<std::string> tiny_requirements() {
  return {
      "The system shall log every request.",
      "The server shall reject invalid tokens.",
      "The gateway shall encrypt all traffic.",
      "The monitor shall display current load.",
      "The database shall archive old records.",
      "The terminal shall lock after timeout.",
      "The scheduler shall retry failed jobs.",
      "The portal shall notify new users.",
  };
}

// Deterministic synthetic requirements corpus: template-filled shall
// statements over a compact vocabulary.
inline std::vector<std::string> synthetic_corpus(std::size_t count,
                                                 std::uint64_t seed) {
  using reqvae::Rng;
  const std::vector<std::string> subjects = {
      "system",   "server",    "gateway",  "terminal", "controller",
      "module",   "service",   "device",   "portal",   "scheduler",
      "monitor",  "database",  "printer",  "scanner",  "router",
      "operator", "dashboard", "recorder", "charger",  "dispatcher"};
  const std::vector<std::string> verbs = {
      "record",   "validate", "encrypt",  "display",  "archive",
      "reject",   "forward",  "monitor",  "suspend",  "restore",
      "schedule", "notify",   "compress", "track",    "verify",
      "log",      "publish",  "restart",  "balance",  "synchronize"};
  const std::vector<std::string> objects = {
      "request",  "report",   "transaction", "message", "credential",
      "order",    "document", "alarm",       "backup",  "session",
      "shipment", "ticket",   "reading",     "invoice", "batch",
      "profile",  "license",  "snapshot",    "queue",   "certificate"};
  const std::vector<std::string> tails = {
      "within two seconds",        "before the next cycle",
      "after each update",         "during normal operation",
      "when the limit is reached", "without manual approval",
      "at the end of the shift",   "under heavy load",
      "for every active user",     "in the audit trail",
      "once per hour",             "on the main screen",
      "unless an override is active",   "after three retries",
      "while the network is available", "according to the policy",
      "before midnight",           "with a unique identifier",
      "in chronological order",    "despite partial failures"};

  std::vector<std::string> out;
  std::set<std::string> seen;
  Rng rng(seed);
  while (out.size() < count) {
    const std::string s = "The " + subjects[rng.below(subjects.size())] +
                          " shall " + verbs[rng.below(verbs.size())] +
                          " each " + objects[rng.below(objects.size())] + " " +
                          tails[rng.below(tails.size())] + ".";
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

// Synthetic stand-in for a pretrained embedding file: every word of the
// given sentences gets a seeded N(0, 0.4^2) vector, mimicking the scale and
// spread of published GloVe vectors without shipping one.
inline reqvae::EmbeddingTable synthetic_glove_table(
    const std::vector<std::string>& sentences, int dim = 100) {
  using namespace reqvae;
  EmbeddingTable table;
  table.dim = dim;
  RequirementsCorpus c;
  c.entries = sentences;
  Vocabulary v = build_vocab(c, 100000);
  for (const std::string& w : v.words()) {
    Rng rng(mix_seed(0x61, std::hash<std::string>{}(w)));
    std::vector<float> vec(static_cast<std::size_t>(dim));
    for (float& x : vec) x = static_cast<float>(0.4 * rng.normal());
    table.vectors.emplace(w, std::move(vec));
  }
  return table;
}
