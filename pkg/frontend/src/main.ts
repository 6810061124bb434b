import { AnnotationApi } from "./api";
import { AppController } from "./controller";
import { bindKeyboard, render } from "./view";

const api = new AnnotationApi("");
const controller = new AppController(api);
const root = document.getElementById("app");
if (root === null) throw new Error("missing #app mount point");

controller.subscribe((state) => render(root, state, controller, api));
bindKeyboard(document, controller);
void controller.start("suitability");
