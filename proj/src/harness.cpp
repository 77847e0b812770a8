/*
Copyright 2026 The kadrtc Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#include "kadrtc/harness.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace kadrtc {

namespace {

milliseconds const keepalive_period{5000};
// a keepalive arriving later than this after its slot counts as missed
milliseconds const keepalive_grace{2500};
milliseconds const connect_timeout{10000};

} // namespace

sim_cluster::sim_cluster(sim_network_config net, node_config cfg, std::uint64_t seed)
	: m_net(std::make_unique<sim_network>(std::move(net)))
	, m_config(cfg)
	, m_rng(seed)
{
	m_config.validate();
}

sim_cluster::~sim_cluster()
{
	m_gateways.clear();
	m_nodes.clear();
}

node& sim_cluster::add_node()
{
	return add_node(node_id::random(m_rng));
}

node& sim_cluster::add_node(node_id id)
{
	endpoint const ep = m_net->allocate_endpoint();
	node_config cfg = m_config;
	cfg.seed = m_rng.fork_seed();
	m_nodes.push_back(std::make_unique<node>(id, m_net->bind(ep), cfg));
	return *m_nodes.back();
}

bool sim_cluster::bootstrap(std::size_t n)
{
	bool ok = true;
	if (m_nodes.empty() && n > 0) add_node();
	while (m_nodes.size() < n)
	{
		node& fresh = add_node();
		ok = join(fresh, m_nodes.front()->address()).ok && ok;
	}
	return ok;
}

std::vector<node_id> sim_cluster::oracle_closest(node_id const& target, std::size_t k
	, std::optional<node_id> exclude) const
{
	std::vector<node_id> ids;
	for (auto const& n : m_nodes)
	{
		if (!alive(*n)) continue;
		if (exclude && n->id() == *exclude) continue;
		ids.push_back(n->id());
	}
	std::sort(ids.begin(), ids.end(), [&](node_id const& a, node_id const& b) {
		return distance(a, target) < distance(b, target);
	});
	if (ids.size() > k) ids.resize(k);
	return ids;
}

gateway& sim_cluster::gateway_at(std::size_t i)
{
	auto& g = m_gateways[i];
	if (!g) g = std::make_unique<gateway>(at(i));
	return *g;
}

lookup_result sim_cluster::find_node(node& from, node_id const& target)
{
	return await<lookup_result>([&](auto cb) { from.iterative_find_node(target, cb); });
}

value_lookup_result sim_cluster::find_value(node& from, node_id const& key)
{
	return await<value_lookup_result>([&](auto cb) { from.iterative_find_value(key, cb); });
}

store_result sim_cluster::store(node& from, node_id const& key, std::string const& value, seconds ttl, bool republish)
{
	return await<store_result>([&](auto cb) { from.store(key, value, ttl, cb, republish); });
}

join_report sim_cluster::join(node& n, endpoint const& bootstrap)
{
	return await<join_report>([&](auto cb) { n.join(bootstrap, cb); });
}

char const* to_string(scenario s)
{
	switch (s)
	{
	case scenario::lookup_scaling: return "lookup_scaling";
	case scenario::connection_time: return "connection_time";
	case scenario::failure_rate: return "failure_rate";
	case scenario::session_survival: return "session_survival";
	case scenario::churn_recovery: return "churn_recovery";
	}
	return "?";
}

std::optional<scenario> scenario_from_string(std::string_view s)
{
	for (auto v : {scenario::lookup_scaling, scenario::connection_time, scenario::failure_rate
		, scenario::session_survival, scenario::churn_recovery})
	{
		if (s == to_string(v)) return v;
	}
	return std::nullopt;
}

void experiment_config::validate() const
{
	if (trials < 1) throw config_error("trials must be at least 1");
	if (!(churn_rate >= 0.0 && churn_rate < 1.0)) throw config_error("churn_rate must be in [0, 1)");
	if (n_nodes < 2) throw config_error("n_nodes must be at least 2");
	if (k < 1 || alpha < 1 || alpha > k) throw config_error("need 1 <= alpha <= k");
	if (session_duration < seconds(5) || session_duration.count() % 5 != 0)
		throw config_error("session_duration must be a positive multiple of 5 s");
	if (rpc_timeout <= milliseconds(0)) throw config_error("rpc_timeout must be positive");
	try
	{
		net.validate();
	}
	catch (std::invalid_argument const& e)
	{
		throw config_error(e.what());
	}
}

summary summarize(std::vector<double> values)
{
	summary s;
	if (values.empty()) return s;
	std::sort(values.begin(), values.end());
	std::size_t const n = values.size();
	s.min = values.front();
	s.max = values.back();
	s.median = n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
	std::size_t rank = std::size_t(std::ceil(0.95 * double(n)));
	s.p95 = values[std::max<std::size_t>(rank, 1) - 1];
	return s;
}

report_aggregates compute_aggregates(std::vector<trial_record> const& trials)
{
	report_aggregates a;
	a.trials = trials.size();
	std::vector<double> times, hops, survival;
	for (auto const& t : trials)
	{
		a.messages_sent += t.messages;
		if (!t.success)
		{
			++a.failures;
		}
		else
		{
			times.push_back(double(t.elapsed_ms));
			hops.push_back(double(t.hops));
		}
		if (t.survival_s) survival.push_back(*t.survival_s);
	}
	if (a.trials) a.failure_rate = double(a.failures) / double(a.trials);
	if (!times.empty()) a.connection_time_ms = summarize(times);
	if (!hops.empty()) a.hops = summarize(hops);
	if (!survival.empty()) a.survival_s = summarize(survival);
	return a;
}

std::string synthetic_blob(std::size_t trial, char side, signal_kind kind, int index)
{
	std::string blob = "v=0 trial=" + std::to_string(trial) + " side=" + side
		+ " kind=" + to_string(kind) + " index=" + std::to_string(index) + " ";
	// deterministic filler, so every blob of a trial differs throughout
	std::uint64_t x = rng::splitmix(trial * 1000003 + std::uint64_t(side) * 131 + std::uint64_t(kind) * 7 + std::uint64_t(index));
	static char const alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789+/";
	while (blob.size() < 1024)
	{
		x = rng::splitmix(x);
		blob.push_back(alphabet[x % (sizeof(alphabet) - 1)]);
	}
	return blob;
}

namespace {

gateway_frame signal_out(std::string const& session, signal_kind kind, std::int64_t seq, std::string blob)
{
	return signal_frame(session, kind, seq, blob);
}

// Sends a register frame and runs the sim until the gateway answers.
bool register_client(sim_cluster& sim, std::shared_ptr<loopback_client> const& c, std::string const& name)
{
	std::size_t const before = c->received().size();
	gateway_frame f;
	f.op = "register";
	f.name = name;
	c->send(f);
	auto answered = [&] {
		for (std::size_t i = before; i < c->received().size(); ++i)
		{
			auto const& op = c->received()[i].op;
			if (op == "registered" || op == "error") return true;
		}
		return false;
	};
	sim.net().run_until(answered, sim.net().now() + milliseconds(120'000));
	for (std::size_t i = before; i < c->received().size(); ++i)
		if (c->received()[i].op == "registered") return true;
	return false;
}

struct exchange_state
{
	std::set<std::int64_t> seqs;
	bool intact = true;
};

} // namespace

connection_outcome measure_connection(sim_cluster& sim, std::size_t trial
	, gateway& gw_a, std::shared_ptr<loopback_client> const& a
	, std::string const& name_b, std::shared_ptr<loopback_client> const& b)
{
	sim_network& net = sim.net();
	timestamp const start = net.now();
	std::uint64_t const sent0 = net.datagrams_sent();

	connection_outcome out;
	std::string sid;
	bool failed = false;
	exchange_state at_a, at_b;

	auto check = [trial](exchange_state& st, gateway_frame const& f, char sender) {
		auto const kind = signal_kind_from_string(*f.kind);
		if (!kind) return;
		if (*f.blob != synthetic_blob(trial, sender, *kind, int(*f.seq) - 1)) st.intact = false;
		st.seqs.insert(*f.seq);
	};

	a->on_frame = [&](gateway_frame const& f) {
		if (f.op == "session" && sid.empty())
		{
			sid = *f.session;
			a->send(signal_out(sid, signal_kind::offer, 1, synthetic_blob(trial, 'a', signal_kind::offer, 0)));
			a->send(signal_out(sid, signal_kind::candidate, 2, synthetic_blob(trial, 'a', signal_kind::candidate, 1)));
			a->send(signal_out(sid, signal_kind::candidate, 3, synthetic_blob(trial, 'a', signal_kind::candidate, 2)));
		}
		else if (f.op == "signal" && !sid.empty() && *f.session == sid)
		{
			check(at_a, f, 'b');
		}
		else if (f.op == "error" && sid.empty())
		{
			failed = true;
		}
	};
	b->on_frame = [&](gateway_frame const& f) {
		if (f.op != "signal" || sid.empty() || *f.session != sid) return;
		check(at_b, f, 'a');
		if (*f.kind == "offer")
		{
			b->send(signal_out(sid, signal_kind::answer, 1, synthetic_blob(trial, 'b', signal_kind::answer, 0)));
			b->send(signal_out(sid, signal_kind::candidate, 2, synthetic_blob(trial, 'b', signal_kind::candidate, 1)));
			b->send(signal_out(sid, signal_kind::candidate, 3, synthetic_blob(trial, 'b', signal_kind::candidate, 2)));
		}
	};

	gateway_frame connect;
	connect.op = "connect";
	connect.to = name_b;
	a->send(connect);

	std::set<std::int64_t> const full{1, 2, 3};
	auto complete = [&] { return at_a.seqs == full && at_b.seqs == full; };
	net.run_until([&] { return failed || complete(); }, start + connect_timeout);

	out.established = complete();
	out.elapsed_ms = (net.now() - start).count();
	out.messages = net.datagrams_sent() - sent0;
	out.session = sid;
	out.blobs_intact = at_a.intact && at_b.intact;
	if (!sid.empty()) out.hops = gw_a.session_resolve_rounds(a->id(), sid).value_or(0);

	a->on_frame = nullptr;
	b->on_frame = nullptr;
	return out;
}

survival_outcome measure_session_survival(sim_cluster& sim, std::size_t
	, std::string const& session, std::shared_ptr<loopback_client> const& a
	, std::shared_ptr<loopback_client> const& b, seconds duration
	, std::vector<std::pair<timestamp, node*>> const& kills)
{
	sim_network& net = sim.net();
	timestamp const t0 = net.now();
	int const windows = int(milliseconds(duration) / keepalive_period);

	// arrival time of keepalive j at each side
	std::vector<std::optional<timestamp>> got_a(std::size_t(windows) + 1), got_b(std::size_t(windows) + 1);
	auto listener = [&](std::vector<std::optional<timestamp>>& got) {
		return [&](gateway_frame const& f) {
			if (f.op != "signal" || *f.session != session || *f.kind != "candidate") return;
			std::int64_t const j = *f.seq - 3;
			if (j < 1 || j > windows) return;
			if (!got[std::size_t(j)]) got[std::size_t(j)] = net.now();
		};
	};
	a->on_frame = listener(got_a);
	b->on_frame = listener(got_b);

	// timeline: kills first on ties, then the keepalives of that slot
	struct step { timestamp at; int order; node* victim; int window; };
	std::vector<step> steps;
	for (auto const& [at, victim] : kills) steps.push_back({at, 0, victim, 0});
	for (int j = 1; j <= windows; ++j) steps.push_back({t0 + keepalive_period * j, 1, nullptr, j});
	std::stable_sort(steps.begin(), steps.end(), [](step const& x, step const& y) {
		return std::tie(x.at, x.order) < std::tie(y.at, y.order);
	});

	for (auto const& s : steps)
	{
		if (s.at > net.now()) net.run_for(s.at - net.now());
		if (s.victim)
		{
			sim.kill(*s.victim);
			continue;
		}
		std::int64_t const seq = 3 + s.window;
		std::string const blob = "keepalive " + std::to_string(s.window);
		a->send(signal_frame(session, signal_kind::candidate, seq, blob + " a"));
		b->send(signal_frame(session, signal_kind::candidate, seq, blob + " b"));
	}
	net.run_for(t0 + milliseconds(duration) + keepalive_grace - net.now());

	auto missed = [&](int j) {
		timestamp const deadline = t0 + keepalive_period * j + keepalive_grace;
		auto late = [&](std::optional<timestamp> const& t) { return !t || *t > deadline; };
		return late(got_a[std::size_t(j)]) || late(got_b[std::size_t(j)]);
	};

	survival_outcome out;
	out.survival_s = double(duration.count());
	for (int j = 1; j < windows; ++j)
	{
		if (missed(j) && missed(j + 1))
		{
			out.dropped_at = t0 + keepalive_period * (j + 1);
			out.survival_s = double((keepalive_period * (j + 1)).count()) / 1000.0;
			break;
		}
	}

	a->on_frame = nullptr;
	b->on_frame = nullptr;
	return out;
}

namespace {

occupancy_report measure_occupancy(sim_cluster& sim)
{
	occupancy_report r;
	double total = 0;
	for (std::size_t i = 0; i < sim.size(); ++i)
	{
		int const occ = sim.at(i).table().occupied_buckets();
		++r.histogram[occ];
		total += occ;
	}
	if (sim.size()) r.mean_occupied = total / double(sim.size());
	return r;
}

std::size_t pick(rng& r, std::size_t n) { return std::size_t(r.uniform(n)); }

void run_lookups(sim_cluster& sim, experiment_config const& cfg, rng& r, metrics_report& rep)
{
	for (std::size_t t = 0; t < cfg.trials; ++t)
	{
		std::size_t src;
		do src = pick(r, sim.size()); while (!sim.alive(sim.at(src)));
		node& from = sim.at(src);
		node_id const target = node_id::random(r);

		timestamp const start = sim.net().now();
		std::uint64_t const sent0 = sim.net().datagrams_sent();
		lookup_result const res = sim.find_node(from, target);

		std::vector<node_id> got;
		for (auto const& c : res.contacts) got.push_back(c.id);
		trial_record rec;
		rec.trial = t;
		rec.success = res.status == lookup_status::ok && got == sim.oracle_closest(target, cfg.k, from.id());
		rec.elapsed_ms = (sim.net().now() - start).count();
		rec.hops = res.rounds;
		rec.messages = sim.net().datagrams_sent() - sent0;
		rep.trials.push_back(rec);
	}
}

struct pair_setup
{
	std::size_t gw_a = 0;
	std::size_t gw_b = 0;
	std::shared_ptr<loopback_client> a;
	std::shared_ptr<loopback_client> b;
	std::string name_b;
};

pair_setup open_pair(sim_cluster& sim, rng& r, std::size_t trial)
{
	pair_setup p;
	p.gw_a = pick(r, sim.size());
	do p.gw_b = pick(r, sim.size()); while (p.gw_b == p.gw_a);
	p.a = loopback_client::open(sim.gateway_at(p.gw_a));
	p.b = loopback_client::open(sim.gateway_at(p.gw_b));
	p.name_b = "peer-b-" + std::to_string(trial);
	register_client(sim, p.a, "peer-a-" + std::to_string(trial));
	register_client(sim, p.b, p.name_b);
	return p;
}

void run_connections(sim_cluster& sim, experiment_config const& cfg, rng& r, metrics_report& rep
	, std::vector<std::string>& notes)
{
	for (std::size_t t = 0; t < cfg.trials; ++t)
	{
		pair_setup p = open_pair(sim, r, t);
		connection_outcome const c = measure_connection(sim, t, sim.gateway_at(p.gw_a), p.a, p.name_b, p.b);
		if (c.established && !c.blobs_intact) notes.push_back("trial " + std::to_string(t) + ": blobs altered in transit");

		trial_record rec;
		rec.trial = t;
		rec.success = c.established;
		rec.elapsed_ms = c.elapsed_ms;
		rec.hops = c.hops;
		rec.messages = c.messages;

		if (cfg.kind == scenario::session_survival && c.established)
		{
			std::vector<std::pair<timestamp, node*>> kills;
			timestamp const t0 = sim.net().now();
			std::int64_t const span = milliseconds(cfg.session_duration).count();
			if (cfg.kill_gateways)
			{
				// both gateways die together in the first half of the session
				timestamp const at = t0 + milliseconds(r.uniform_int(1, span / 2));
				kills.emplace_back(at, &sim.at(p.gw_a));
				kills.emplace_back(at, &sim.at(p.gw_b));
			}
			std::vector<std::size_t> others;
			for (std::size_t i = 0; i < sim.size(); ++i)
				if (i != p.gw_a && i != p.gw_b) others.push_back(i);
			std::size_t const victims = std::size_t(std::llround(cfg.churn_rate * double(others.size())));
			for (std::size_t v = 0; v < victims; ++v)
			{
				std::size_t const j = v + pick(r, others.size() - v);
				std::swap(others[v], others[j]);
				kills.emplace_back(t0 + milliseconds(r.uniform_int(1, span - 1)), &sim.at(others[v]));
			}

			survival_outcome const s = measure_session_survival(sim, t, c.session, p.a, p.b, cfg.session_duration, kills);
			rec.survival_s = s.survival_s;
			if (cfg.kill_gateways && s.dropped_at)
			{
				timestamp const killed = kills.front().first;
				rec.detect_windows = int((s.dropped_at->count() - killed.count() + keepalive_period.count() - 1)
					/ keepalive_period.count());
			}
			for (auto const& [at, victim] : kills) sim.revive(*victim);
		}
		else if (cfg.kind == scenario::session_survival)
		{
			rec.survival_s = 0.0;
		}

		p.a->close();
		p.b->close();
		rep.trials.push_back(rec);
	}
}

void check_invariants(experiment_config const& cfg, metrics_report& rep)
{
	auto& v = rep.violations;
	auto const& agg = rep.aggregates;
	double const n = double(cfg.n_nodes);
	bool const lossless = cfg.net.loss_rate == 0.0;

	switch (cfg.kind)
	{
	case scenario::lookup_scaling:
	{
		std::vector<double> hops;
		for (auto const& t : rep.trials) hops.push_back(t.hops);
		summary const h = summarize(hops);
		double const median_limit = std::ceil(std::log2(n)) + 2;
		double const max_limit = 2 * std::log2(n);
		if (h.median > median_limit)
			v.push_back("median hops " + std::to_string(h.median) + " > " + std::to_string(median_limit));
		if (h.max > max_limit)
			v.push_back("max hops " + std::to_string(h.max) + " > " + std::to_string(max_limit));
		if (lossless && agg.failures)
			v.push_back(std::to_string(agg.failures) + " lookups differ from the global oracle");
		break;
	}
	case scenario::churn_recovery:
		if (lossless && agg.failures)
			v.push_back(std::to_string(agg.failures) + " lookups failed after the refresh cycle");
		break;
	case scenario::connection_time:
	case scenario::failure_rate:
	case scenario::session_survival:
		if (lossless && agg.failures)
			v.push_back("failure_rate " + std::to_string(agg.failure_rate) + " at loss 0");
		if (cfg.net.loss_rate >= 1.0 && agg.failure_rate != 1.0)
			v.push_back("failure_rate " + std::to_string(agg.failure_rate) + " at loss 1");
		if (cfg.net.loss_rate > 0.0 && cfg.net.loss_rate <= 0.05 && agg.failure_rate > 0.05)
			v.push_back("failure_rate " + std::to_string(agg.failure_rate) + " above 0.05");
		for (auto const& t : rep.trials)
		{
			if (t.success && t.elapsed_ms < 2 * cfg.net.latency_min.count())
				v.push_back("trial " + std::to_string(t.trial) + ": connection faster than two one-way latencies");
		}
		if (cfg.kind != scenario::session_survival) break;
		for (auto const& t : rep.trials)
		{
			if (!t.success) continue;
			bool const full = *t.survival_s == double(cfg.session_duration.count());
			if (cfg.kill_gateways)
			{
				if (full) v.push_back("trial " + std::to_string(t.trial) + ": gateway kill went unnoticed");
				else if (!t.detect_windows || *t.detect_windows > 2)
					v.push_back("trial " + std::to_string(t.trial) + ": drop detected after more than 2 windows");
			}
			else if (lossless && !full)
			{
				v.push_back("trial " + std::to_string(t.trial) + ": session dropped after "
					+ std::to_string(*t.survival_s) + " s");
			}
		}
		break;
	}
}

} // namespace

metrics_report run_experiment(experiment_config const& cfg)
{
	cfg.validate();
	metrics_report rep;
	rep.config = cfg;

	node_config nc;
	nc.k = cfg.k;
	nc.alpha = cfg.alpha;
	nc.rpc_timeout = cfg.rpc_timeout;
	nc.seed = cfg.net.seed;

	// bootstrap on a clean network; the configured loss starts afterwards
	sim_network_config boot = cfg.net;
	boot.loss_rate = 0.0;
	sim_cluster sim(boot, nc, rng::splitmix(cfg.net.seed));
	rng r(rng::splitmix(cfg.net.seed ^ 0x6b61647274630000ULL));

	if (!sim.bootstrap(cfg.n_nodes)) rep.violations.push_back("bootstrap: a join failed");
	rep.occupancy = measure_occupancy(sim);
	sim.net().set_loss_rate(cfg.net.loss_rate);

	std::vector<std::string> notes;
	switch (cfg.kind)
	{
	case scenario::lookup_scaling:
		run_lookups(sim, cfg, r, rep);
		break;
	case scenario::churn_recovery:
	{
		std::vector<std::size_t> order(sim.size());
		for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
		std::size_t const victims = std::size_t(std::llround(cfg.churn_rate * double(sim.size())));
		for (std::size_t v = 0; v < victims; ++v)
		{
			std::swap(order[v], order[v + pick(r, order.size() - v)]);
			sim.kill(sim.at(order[v]));
		}
		// one refresh cycle: every survivor refreshes as if refresh_interval
		// had passed since its last lookup activity
		timestamp const cycle = sim.net().now() + milliseconds(nc.refresh_interval);
		for (std::size_t i = 0; i < sim.size(); ++i)
			if (sim.alive(sim.at(i))) sim.at(i).refresh_buckets(cycle);
		sim.net().run_for(milliseconds(120'000));
		run_lookups(sim, cfg, r, rep);
		break;
	}
	case scenario::connection_time:
	case scenario::failure_rate:
	case scenario::session_survival:
		run_connections(sim, cfg, r, rep, notes);
		break;
	}

	rep.aggregates = compute_aggregates(rep.trials);
	check_invariants(cfg, rep);
	for (auto& n : notes) rep.violations.push_back(std::move(n));
	return rep;
}

namespace {

std::string num(double d)
{
	char buf[64];
	auto const [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
	return std::string(buf, end);
}

template <class T>
std::string num_int(T v) { return std::to_string(v); }

nlohmann::json summary_json(std::optional<summary> const& s)
{
	if (!s) return nullptr;
	return {{"min", s->min}, {"median", s->median}, {"p95", s->p95}, {"max", s->max}};
}

} // namespace

std::string to_csv(metrics_report const& r)
{
	std::ostringstream os;
	os << "trial,success,elapsed_ms,hops,messages,survival_s,detect_windows"
		",failure_rate,time_min_ms,time_median_ms,time_p95_ms,time_max_ms"
		",hops_median,hops_max,survival_min_s,survival_median_s,survival_max_s,messages_total\n";
	if (r.trials.empty()) return os.str();

	for (auto const& t : r.trials)
	{
		os << t.trial << ',' << (t.success ? 1 : 0) << ',' << t.elapsed_ms << ',' << t.hops << ',' << t.messages
			<< ',' << (t.survival_s ? num(*t.survival_s) : "")
			<< ',' << (t.detect_windows ? num_int(*t.detect_windows) : "")
			<< ",,,,,,,,,,,\n";
	}
	auto const& a = r.aggregates;
	auto opt = [](std::optional<summary> const& s, double summary::*field) {
		return s ? num((*s).*field) : std::string();
	};
	os << "aggregate,,,,,,"
		<< ',' << num(a.failure_rate)
		<< ',' << opt(a.connection_time_ms, &summary::min)
		<< ',' << opt(a.connection_time_ms, &summary::median)
		<< ',' << opt(a.connection_time_ms, &summary::p95)
		<< ',' << opt(a.connection_time_ms, &summary::max)
		<< ',' << opt(a.hops, &summary::median)
		<< ',' << opt(a.hops, &summary::max)
		<< ',' << opt(a.survival_s, &summary::min)
		<< ',' << opt(a.survival_s, &summary::median)
		<< ',' << opt(a.survival_s, &summary::max)
		<< ',' << a.messages_sent << '\n';
	return os.str();
}

std::string to_json(metrics_report const& r)
{
	using nlohmann::json;
	auto const& c = r.config;
	json cfg = {
		{"scenario", to_string(c.kind)},
		{"nodes", c.n_nodes},
		{"k", c.k},
		{"alpha", c.alpha},
		{"trials", c.trials},
		{"seed", c.net.seed},
		{"loss", c.net.loss_rate},
		{"latency_min_ms", c.net.latency_min.count()},
		{"latency_max_ms", c.net.latency_max.count()},
		{"churn", c.churn_rate},
		{"session_duration_s", c.session_duration.count()},
		{"kill_gateways", c.kill_gateways},
		{"rpc_timeout_ms", c.rpc_timeout.count()},
	};
	json trials = json::array();
	for (auto const& t : r.trials)
	{
		json row = {
			{"trial", t.trial},
			{"success", t.success},
			{"elapsed_ms", t.elapsed_ms},
			{"hops", t.hops},
			{"messages", t.messages},
		};
		row["survival_s"] = t.survival_s ? json(*t.survival_s) : json(nullptr);
		row["detect_windows"] = t.detect_windows ? json(*t.detect_windows) : json(nullptr);
		trials.push_back(std::move(row));
	}
	auto const& a = r.aggregates;
	json agg = {
		{"trials", a.trials},
		{"failures", a.failures},
		{"failure_rate", a.failure_rate},
		{"connection_time_ms", summary_json(a.connection_time_ms)},
		{"hops", summary_json(a.hops)},
		{"session_survival_s", summary_json(a.survival_s)},
		{"messages_sent", a.messages_sent},
	};
	json doc = {{"config", cfg}, {"trials", trials}, {"aggregate", agg}, {"violations", r.violations}};
	if (r.occupancy)
	{
		json hist = json::object();
		for (auto const& [buckets, nodes] : r.occupancy->histogram) hist[std::to_string(buckets)] = nodes;
		doc["occupancy"] = {{"mean_occupied", r.occupancy->mean_occupied}, {"histogram", hist}};
	}
	return doc.dump(2) + "\n";
}

void export_report(metrics_report const& r, std::filesystem::path const& path, report_format format)
{
	std::string const text = format == report_format::csv ? to_csv(r) : to_json(r);
	std::ofstream os(path, std::ios::binary | std::ios::trunc);
	if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
	os << text;
	os.flush();
	if (!os) throw std::runtime_error("write to " + path.string() + " failed");
}

} // namespace kadrtc
