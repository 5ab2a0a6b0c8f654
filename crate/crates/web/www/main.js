import init, { Scene } from "./pkg/stereo_kit_web.js";

const MAX_DISPARITY = 16;
const $ = (id) => document.getElementById(id);

let scene = null;

function paint(id, rgba) {
  const canvas = $(id);
  canvas.width = scene.width;
  canvas.height = scene.height;
  const img = new ImageData(new Uint8ClampedArray(rgba), scene.width, scene.height);
  canvas.getContext("2d").putImageData(img, 0, 0);
}

function caption(id, label, view) {
  $(id).textContent = `${label}: ${view.mean_abs_error.toFixed(3)} px, ${(100 * view.bad_pixel_fraction).toFixed(1)}% bad`;
}

function guarded(f) {
  try {
    $("status").textContent = "";
    f();
  } catch (e) {
    $("status").textContent = e.message ?? String(e);
  }
}

function drawMaps() {
  guarded(() => {
    const offset = Number($("offset").value);
    const heads = Number($("heads").value);
    $("offset-out").textContent = offset;
    for (const kind of ["cosine", "lnd", "multihead"]) {
      paint(kind, scene.similarity_rgba(kind, offset, heads));
    }
  });
}

function drawDisparity() {
  guarded(() => {
    const heads = Number($("heads").value);
    const off = scene.disparity_view(false, MAX_DISPARITY, heads);
    const on = scene.disparity_view(true, MAX_DISPARITY, heads);
    paint("disp-off", off.rgba());
    paint("disp-on", on.rgba());
    caption("disp-off-cap", "without RPE", off);
    caption("disp-on-cap", "with RPE", on);
    off.free();
    on.free();
  });
}

function rebuild() {
  $("roll-out").textContent = $("roll").value;
  $("disparity-out").textContent = $("disparity").value;
  guarded(() => {
    scene?.free();
    scene = null;
    scene = new Scene(
      $("texture").value,
      Number($("roll").value),
      Number($("disparity").value),
      Number($("seed").value),
    );
    paint("left", scene.left_rgba());
    paint("right", scene.right_rgba());
    paint("enc-left", scene.encoding_rgba(false));
    paint("enc-right", scene.encoding_rgba(true));
  });
  if (scene) {
    drawMaps();
    drawDisparity();
  }
}

await init();
for (const id of ["texture", "roll", "disparity", "seed"]) $(id).addEventListener("change", rebuild);
$("offset").addEventListener("input", drawMaps);
$("heads").addEventListener("change", () => {
  drawMaps();
  drawDisparity();
});
rebuild();
