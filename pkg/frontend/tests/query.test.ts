import { describe, expect, it } from "vitest";

import { displayScore, sketchToQuery, splitAtSpan } from "../src/query.js";

describe("sketchToQuery", () => {
  it("formats two points as a sketch literal", () => {
    expect(sketchToQuery([[0, 0], [10, 5]])).toBe("[v=0:0,10:5]");
  });

  it("sorts points by x", () => {
    expect(sketchToQuery([[20, 1], [0, 0], [10, 5]])).toBe("[v=0:0,10:5,20:1]");
  });

  it("later clicks at a used x win", () => {
    expect(sketchToQuery([[0, 0], [10, 5], [10, 9]])).toBe("[v=0:0,10:9]");
  });

  it("needs two distinct x positions", () => {
    expect(sketchToQuery([])).toBeNull();
    expect(sketchToQuery([[5, 5]])).toBeNull();
    expect(sketchToQuery([[5, 1], [5, 2]])).toBeNull();
  });

  it("trims float noise", () => {
    expect(sketchToQuery([[0.12345, 1], [3.00001, 2]])).toBe("[v=0.123:1,3:2]");
  });
});

describe("splitAtSpan", () => {
  it("splits interior spans", () => {
    expect(splitAtSpan("[p=uq]", [3, 5])).toEqual({ before: "[p=", bad: "uq", after: "]" });
  });

  it("widens empty spans to one character", () => {
    expect(splitAtSpan("u ? d", [2, 2])).toEqual({ before: "u ", bad: "?", after: " d" });
  });

  it("marks end-of-input errors with a caret character", () => {
    const parts = splitAtSpan("[p=up", [5, 5]);
    expect(parts.before).toBe("[p=up");
    expect(parts.bad.length).toBeGreaterThan(0);
    expect(parts.after).toBe("");
  });

  it("clamps out-of-range spans", () => {
    const parts = splitAtSpan("ud", [50, 60]);
    expect(parts.before).toBe("ud");
    expect(parts.after).toBe("");
  });
});

describe("displayScore", () => {
  it("renders signed three-decimal scores", () => {
    expect(displayScore(0.5)).toBe("+0.500");
    expect(displayScore(-0.25)).toBe("-0.250");
  });

  it("never displays a score outside [-1, 1]", () => {
    expect(displayScore(7)).toBe("+1.000");
    expect(displayScore(-3)).toBe("-1.000");
  });
});
