void reverse(int n, int A[const restrict static n])
{
  for (int i = 0; i < n / 2; i++) {
    int tmp = A[i];
    A[i] = A[n - 1 - i];
    A[n - 1 - i] = tmp;
  }
}
