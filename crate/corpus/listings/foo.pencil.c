void foo_summary(int n, int A[restrict const static n], int B[restrict const static n],
                 int C[restrict const static n])
{
  for (int i = 0; i < n; i++) {
    DEF(A[i]); USE(B[i]); MAY_DEF(B[i]);
  }
  if (n < 4) DEF(C[0]); // one-element def
  USE(A[n-1]);
}

void foo(int n, int A[restrict const static n], int B[restrict const static n],
         int C[restrict const static n])
  ACCESS(foo_summary(n, A, B, C))
{
  int i;
  for (i = 0; i < n; i++) {
    A[i] = B[i];
    B[rand() % n] = A[i];
  }
  if (n < 4) C[0] = A[n-1];
}
