"""
Token and cost accounting
=========================

Every completion records its token usage in a ledger; prices live in backend
configs, never in code. The report multiplies exactly and also emits pairwise
cost ratios, which is how hosted-versus-premium comparisons are made.
"""

from odagents.evaluation import cost_report
from odagents.gateway import BackendConfig, Usage, UsageLedger

ledger = UsageLedger()
# Equal token counts on both backends isolates the price difference.
ledger.record("premium-api", Usage(1_000_000, 200_000))
ledger.record("hosted-open-model", Usage(1_000_000, 200_000))

configs = {
    "premium-api": BackendConfig(
        "premium-api", "http", endpoint="http://premium/v1/chat/completions", model_name="big",
        price_per_input_token=2.5e-6, price_per_output_token=1.0e-5,
    ),
    "hosted-open-model": BackendConfig(
        "hosted-open-model", "http", endpoint="http://hosted/v1/chat/completions", model_name="small",
        price_per_input_token=3.0e-7, price_per_output_token=6.1e-7,
    ),
}

report = cost_report(ledger, configs)
for backend, stats in report["backends"].items():
    print(f"{backend:18s} in={stats['input_tokens']:>9,} out={stats['output_tokens']:>8,} "
          f"cost=${stats['total_cost']:.4f}")

ratio = report["ratios"]["premium-api/hosted-open-model"]
print(f"\npremium vs hosted: input {ratio['input']:.2f}x, output {ratio['output']:.2f}x")
print("(1M input tokens at $0.0000025 -> ${:.2f})".format(report["backends"]["premium-api"]["input_cost"]))
