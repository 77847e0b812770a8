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

// kadsim: runs harness scenarios over the simulated network.

#include "kadrtc/harness.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace kadrtc;

namespace {

struct options
{
	std::string scenario = "connection_time";
	std::size_t nodes = 64;
	std::size_t trials = 100;
	std::uint64_t seed = 1;
	double loss = 0.0;
	std::string latency = "10:50";
	double churn = 0.0;
	int duration = 60;
	bool kill_gateways = false;
	std::size_t k = 20;
	std::size_t alpha = 3;
	std::string out;
	std::string format;
};

void add_common(CLI::App* cmd, options& o)
{
	cmd->add_option("--scenario", o.scenario, "lookup_scaling|connection_time|failure_rate|session_survival|churn_recovery");
	cmd->add_option("--nodes", o.nodes, "number of DHT nodes");
	cmd->add_option("--trials", o.trials, "trials per report");
	cmd->add_option("--seed", o.seed, "simulation seed");
	cmd->add_option("--loss", o.loss, "packet loss rate after bootstrap");
	cmd->add_option("--latency", o.latency, "one-way latency range in ms, lo:hi");
	cmd->add_option("--churn", o.churn, "fraction of nodes killed");
	cmd->add_option("--duration", o.duration, "session length in virtual seconds");
	cmd->add_flag("--kill-gateways", o.kill_gateways, "kill both gateways mid-session");
	cmd->add_option("--k", o.k, "bucket size");
	cmd->add_option("--alpha", o.alpha, "lookup parallelism");
	cmd->add_option("--out", o.out, "report path");
	cmd->add_option("--format", o.format, "csv or json (default: from the --out extension)")
		->check(CLI::IsMember({"csv", "json"}));
}

experiment_config make_config(options const& o)
{
	experiment_config c;
	auto const kind = scenario_from_string(o.scenario);
	if (!kind) throw config_error("unknown scenario " + o.scenario);
	c.kind = *kind;
	c.n_nodes = o.nodes;
	c.trials = o.trials;
	c.net.seed = o.seed;
	c.net.loss_rate = o.loss;
	auto const colon = o.latency.find(':');
	if (colon == std::string::npos) throw config_error("--latency wants lo:hi");
	try
	{
		c.net.latency_min = milliseconds(std::stoll(o.latency.substr(0, colon)));
		c.net.latency_max = milliseconds(std::stoll(o.latency.substr(colon + 1)));
	}
	catch (std::exception const&)
	{
		throw config_error("--latency wants lo:hi");
	}
	c.churn_rate = o.churn;
	c.session_duration = seconds(o.duration);
	c.kill_gateways = o.kill_gateways;
	c.k = o.k;
	c.alpha = o.alpha;
	c.validate();
	return c;
}

report_format format_for(options const& o, std::string const& path)
{
	if (o.format == "json") return report_format::json;
	if (o.format == "csv") return report_format::csv;
	return path.ends_with(".json") ? report_format::json : report_format::csv;
}

void print_summary(metrics_report const& r)
{
	auto const& a = r.aggregates;
	std::cout << to_string(r.config.kind) << " nodes=" << r.config.n_nodes << " trials=" << a.trials
		<< " failure_rate=" << a.failure_rate;
	if (a.connection_time_ms) std::cout << " elapsed_median_ms=" << a.connection_time_ms->median;
	if (a.hops) std::cout << " hops_median=" << a.hops->median << " hops_max=" << a.hops->max;
	if (a.survival_s) std::cout << " survival_median_s=" << a.survival_s->median;
	if (r.occupancy) std::cout << " occupied_mean=" << r.occupancy->mean_occupied;
	std::cout << " messages=" << a.messages_sent << (r.ok() ? " ok" : " FAILED") << "\n";
	for (auto const& v : r.violations) std::cerr << "  invariant: " << v << "\n";
}

// report.csv + nodes=32 -> report-nodes32.csv
std::string point_path(std::string const& base, std::string const& param, std::string const& value)
{
	std::filesystem::path p(base);
	std::string const stem = p.stem().string() + "-" + param + value;
	return (p.parent_path() / (stem + p.extension().string())).string();
}

} // namespace

int main(int argc, char** argv)
{
	CLI::App app{"kadsim: deterministic experiments over a simulated Kademlia signaling overlay"};
	app.require_subcommand(1);

	options o;
	auto* run = app.add_subcommand("run", "run one experiment");
	add_common(run, o);

	std::string sweep_param;
	auto* sweep = app.add_subcommand("sweep", "run one experiment per parameter value");
	add_common(sweep, o);
	sweep->add_option("--param", sweep_param, "name=v1,v2,... over nodes, loss, churn, seed, trials")->required();

	CLI11_PARSE(app, argc, argv);

	try
	{
		if (run->parsed())
		{
			metrics_report const r = run_experiment(make_config(o));
			print_summary(r);
			if (!o.out.empty()) export_report(r, o.out, format_for(o, o.out));
			return r.ok() ? 0 : 1;
		}

		auto const eq = sweep_param.find('=');
		if (eq == std::string::npos) throw config_error("--param wants name=v1,v2,...");
		std::string const name = sweep_param.substr(0, eq);
		std::vector<std::string> values;
		std::stringstream ss(sweep_param.substr(eq + 1));
		for (std::string v; std::getline(ss, v, ',');) values.push_back(v);
		if (values.empty()) throw config_error("--param has no values");

		bool all_ok = true;
		for (auto const& v : values)
		{
			options point = o;
			try
			{
				if (name == "nodes") point.nodes = std::stoul(v);
				else if (name == "loss") point.loss = std::stod(v);
				else if (name == "churn") point.churn = std::stod(v);
				else if (name == "seed") point.seed = std::stoull(v);
				else if (name == "trials") point.trials = std::stoul(v);
				else throw config_error("cannot sweep " + name);
			}
			catch (std::logic_error const&)
			{
				throw config_error("bad value " + v + " for " + name);
			}
			metrics_report const r = run_experiment(make_config(point));
			print_summary(r);
			if (!o.out.empty())
			{
				std::string const path = point_path(o.out, name, v);
				export_report(r, path, format_for(o, path));
			}
			all_ok = all_ok && r.ok();
		}
		return all_ok ? 0 : 1;
	}
	catch (config_error const& e)
	{
		std::cerr << "kadsim: " << e.what() << "\n";
		return 2;
	}
	catch (std::exception const& e)
	{
		std::cerr << "kadsim: " << e.what() << "\n";
		return 3;
	}
}
