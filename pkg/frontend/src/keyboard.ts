/** Keyboard bindings: A=accept, R=reject, space toggles the overlay. */

export type KeyAction = "accept" | "reject" | "toggle-overlay";

export function mapKey(event: Pick<KeyboardEvent, "key" | "target">): KeyAction | null {
  const target = event.target as { tagName?: string } | null;
  if (target?.tagName === "INPUT" || target?.tagName === "TEXTAREA") return null;
  switch (event.key) {
    case "a":
    case "A":
      return "accept";
    case "r":
    case "R":
      return "reject";
    case " ":
      return "toggle-overlay";
    default:
      return null;
  }
}
