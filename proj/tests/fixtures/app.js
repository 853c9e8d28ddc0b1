function sendRequest(url) {
  var img = new Image();
  img.src = url;
  return img;
}

function getIdentifier() {
  var uid = (document.cookie.match(/uid=([^;]+)/) || [])[1] || "anon";
  var endpoint = "https://sync.adnet-tracker.com/id?u=" + encodeURIComponent(uid);
  sendRequest(endpoint);
}

function loadImage(path) {
  var url = "https://news.example.org/img/" + path;
  sendRequest(url);
}

loadImage("banner.png");
getIdentifier();
