"""Committed emissions reporting with randomized audits.

Firms report hourly metered emissions as Pedersen commitments; a reporting
authority publishes a verifiable aggregate; an auditor spot-checks a random
subset of firms chosen by a two-party coin toss.  The package provides the
group and commitment layers, the measurement ledger, the audit and pick
protocol engines, a deterministic adversarial simulation harness, and a CLI.
"""

__version__ = "0.1.0"
