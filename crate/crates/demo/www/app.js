import init, { run_toy, slice_toy, compare_toy } from "./pkg/orbslicer_demo.js";

const FIG1 = `int f() {
  int a;
  a = 42;
  return a;
}
int g() {
  int b;
  b = 42;
  return b;
}
main() {
  int x, y;
  x = f();
  y = g();
}
`;

const $ = (id) => document.getElementById(id);

function criterion() {
  return [$("source").value, Number($("line").value), $("var").value.trim()];
}

// Shows the program with deleted lines struck through.
function render(target, title, view) {
  $(title).textContent = `${view.instantiation}: ${view.retained.length} kept, ` +
    `${view.passes} passes, ${view.candidates} candidates`;
  const deleted = new Set(view.deleted);
  const out = $(target);
  out.replaceChildren();
  $("source").value.split("\n").forEach((text, i) => {
    const span = document.createElement("span");
    span.textContent = `${String(i + 1).padStart(3)}  ${text}\n`;
    if (deleted.has(i + 1)) span.className = "gone";
    out.appendChild(span);
  });
}

function clear() {
  for (const id of ["relation", "left-title", "right-title", "left-out", "right-out"]) $(id).textContent = "";
}

function failed(result) {
  if (result.error) {
    $("relation").textContent = `error: ${result.error}`;
    return true;
  }
  return false;
}

await init();
$("source").value = FIG1;

$("run").onclick = () => {
  const r = JSON.parse(run_toy($("source").value, $("model").value.trim(), $("stdin").value));
  $("run-out").textContent = r.error ? `error: ${r.error}` : `${r.stdout}[${r.status}]`;
};

$("slice").onclick = () => {
  clear();
  const r = JSON.parse(slice_toy(...criterion(), $("left").value, $("inputs").value));
  if (!failed(r)) render("left-out", "left-title", r);
};

$("compare").onclick = () => {
  clear();
  const r = JSON.parse(compare_toy(...criterion(), $("left").value, $("right").value, $("inputs").value));
  if (failed(r)) return;
  $("relation").textContent = `left is ${r.relation === "equal" ? "equal to" : r.relation === "incomparable" ? "incomparable with" : `a proper ${r.relation} of`} right`;
  render("left-out", "left-title", r.left);
  render("right-out", "right-title", r.right);
};
