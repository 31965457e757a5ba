"""Shortlisting eligible resources and splitting requests across them."""

from __future__ import annotations

from typing import Any, Mapping

from .allocation import split_with_limits

DEFAULT_CAP = 100


def _value(p: Any) -> Any:
    return getattr(p, "value", p)


def shortlist(idle_jobs: list[Mapping[str, Any]], resources: list[Mapping[str, Any]]) -> list[dict[str, Any]]:
    usable = {
        r["class_id"]
        for r in resources
        if r["state"] == "up" and r["capacity_limit"] - r["current_occupancy"] > 0
    }
    out = []
    for bundle in idle_jobs:
        prefs = list(bundle["preferred_resources"])
        out.append(
            {
                "bundle_id": bundle["bundle_id"],
                "count": bundle["count"],
                "wall_hours": float(bundle["requirements"]["wall_hours"]),
                "preferred_resources": prefs,
                "eligible": [c for c in prefs if c in usable],
            }
        )
    return out


def allocate(
    shortlisted: list[Mapping[str, Any]],
    budget: Mapping[str, Any],
    resources: list[Mapping[str, Any]],
    cap: int = DEFAULT_CAP,
) -> list[dict[str, Any]]:
    """Turn the shortlist into provision requests.

    Bundles are handled in ``bundle_id`` order and each one draws down the
    funds, allocation and headroom left for the next.
    """
    classes = {r["class_id"]: r for r in resources}
    headroom = {c: max(0, r["capacity_limit"] - r["current_occupancy"]) for c, r in classes.items()}
    # Gate on what is not already promised to live slots when that is known.
    funds = float(budget.get("cloud_funds_uncommitted", budget["cloud_funds_remaining"]))
    allocation = float(budget.get("hpc_allocation_uncommitted", budget["hpc_allocation_remaining"]))
    plan = []
    for entry in sorted(shortlisted, key=lambda e: e["bundle_id"]):
        eligible = [c for c in entry["eligible"] if c in classes]
        if not eligible:
            continue
        wall = float(entry["wall_hours"])
        target = min(int(entry["count"]), cap)

        def cost(c: str, slots: int) -> float:
            return slots * float(classes[c]["unit_cost"]) * wall

        def affordable(c: str, slots: int) -> bool:
            kind = classes[c]["kind"]
            if kind == "cloud":
                return funds >= cost(c, slots)
            if kind == "hpc":
                return allocation >= cost(c, slots)
            return True

        split = split_with_limits(target, eligible, affordable, headroom)
        for c in sorted(split.shares):
            slots = split.shares[c]
            if slots <= 0:
                continue
            kind = classes[c]["kind"]
            if kind == "cloud":
                funds -= cost(c, slots)
            elif kind == "hpc":
                allocation -= cost(c, slots)
            headroom[c] -= slots
            plan.append(
                {
                    "class_id": c,
                    "slots": slots,
                    "for_bundle": entry["bundle_id"],
                    "wall_hours": wall,
                    "justification": {
                        "target_slots": target,
                        "eligible": list(entry["eligible"]),
                        "per_class_share": split.shares,
                        "budget_rejected": list(split.rejected),
                        "headroom_clamped": list(split.clamped),
                    },
                }
            )
    return plan


class ShortlistTransform:
    def __init__(self, parameters: Mapping[str, Any], services: Mapping[str, Any]) -> None:
        pass

    def invoke(self, inputs: Mapping[str, Any]) -> dict[str, Any]:
        return {"shortlist": shortlist(_value(inputs["idle_jobs"]), _value(inputs["resources"]))}


class AllocateTransform:
    def __init__(self, parameters: Mapping[str, Any], services: Mapping[str, Any]) -> None:
        self.cap = int(parameters.get("cap", DEFAULT_CAP))

    @classmethod
    def check_parameters(cls, parameters: Mapping[str, Any]) -> list[str]:
        cap = parameters.get("cap", DEFAULT_CAP)
        if isinstance(cap, bool) or not isinstance(cap, int) or cap < 1:
            return ["'cap' must be a positive integer"]
        return []

    def invoke(self, inputs: Mapping[str, Any]) -> dict[str, Any]:
        return {
            "allocation_plan": allocate(
                _value(inputs["shortlist"]),
                _value(inputs["budget"]),
                _value(inputs["resources"]),
                self.cap,
            )
        }
