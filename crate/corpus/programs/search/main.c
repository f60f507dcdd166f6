void build(int seed);
int scan(int key);
int bisect(int key);

int main(int a, int b) {
    build(a);
    int key = b & 255;
    int s = scan(key);
    int t = bisect(key);
    if (s >= 0 && s != t)
        return -1000;
    return s * 1000 + t;
}
